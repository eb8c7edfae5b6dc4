"""Filesystem-backed patient record store.

Layout (relative to the store root)::

    layout.json                      # persisted StoreLayout
    store.journal                    # line-delimited JSON move journal
    Patient/<patient_id>/*.md        # central database
    Specialty/<name>/<patient_id>/*.md

A patient folder lives in exactly one location. Folder moves are
journaled copy-then-delete so that a crash between the copy and the
delete is rolled forward (or back) on the next ``init_store``.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Iterator

from .errors import (
    AlreadyCentral,
    CorruptLayout,
    DuplicatePatient,
    EmptyQuery,
    FilenameCollision,
    InvalidId,
    PathNotWritable,
    UnknownPatient,
    UnknownSpecialty,
)

DEFAULT_SPECIALTIES = (
    "Dermatology",
    "Psychiatry",
    "Gastroenterology",
    "Neurology",
    "Cardiology",
    "Hematology",
    "Infectious Disease",
    "Oncology",
    "Orthopedics",
    "Nephrology",
    "Pulmonology",
    "Endocrinology",
    "Rheumatology",
    "Urology",
    "Obstetrics and Gynecology",
    "Pediatrics",
    "Ophthalmology",
    "Otolaryngology",
    "Emergency Medicine",
    "Allergy and Immunology",
    "Geriatrics",
    "General Surgery",
)

DEFAULT_SEARCH_LIMIT = 10
_SEQUENCE_MAX = 999


class DocKind(str, Enum):
    TRANSCRIPT = "Transcript"
    HISTORY = "History"
    REPORT = "Report"
    UPDATE_EXPLANATION = "UpdateExplanation"
    REFERRAL_REPORT = "ReferralReport"
    MEDICATION_PLAN = "MedicationPlan"
    EXAM_RESULT = "ExamResult"


# Filename convention: <prefix>_<3-digit sequence>.md
KIND_PREFIX = {
    DocKind.TRANSCRIPT: "transcript",
    DocKind.HISTORY: "history",
    DocKind.REPORT: "report",
    DocKind.UPDATE_EXPLANATION: "explanation",
    DocKind.REFERRAL_REPORT: "referral",
    DocKind.MEDICATION_PLAN: "medication",
    DocKind.EXAM_RESULT: "exam",
}
PREFIX_KIND = {v: k for k, v in KIND_PREFIX.items()}


@dataclass(frozen=True)
class StoreLayout:
    patient_root: str = "Patient"
    specialty_root: str = "Specialty"
    specialties: tuple[str, ...] = DEFAULT_SPECIALTIES

    def validate(self) -> None:
        names = list(self.specialties)
        if len(set(names)) != len(names):
            raise CorruptLayout("duplicate specialty names")
        for n in names + [self.patient_root, self.specialty_root]:
            if not n or "/" in n or "\\" in n or n in (".", ".."):
                raise CorruptLayout(f"invalid directory name {n!r}")

    def to_json(self) -> dict:
        return {
            "patient_root": self.patient_root,
            "specialty_root": self.specialty_root,
            "specialties": list(self.specialties),
        }

    @classmethod
    def from_json(cls, data: dict) -> "StoreLayout":
        return cls(
            patient_root=data["patient_root"],
            specialty_root=data["specialty_root"],
            specialties=tuple(data["specialties"]),
        )


@dataclass(frozen=True)
class Location:
    kind: str  # "central" | "specialty"
    specialty: str | None = None

    @staticmethod
    def central() -> "Location":
        return Location("central")

    @staticmethod
    def at(specialty: str) -> "Location":
        return Location("specialty", specialty)

    def __str__(self) -> str:
        return "central" if self.kind == "central" else f"specialty:{self.specialty}"


@dataclass(frozen=True)
class DocumentRef:
    patient_id: str
    doc_kind: DocKind
    filename: str
    created_at: float
    content_digest: str


@dataclass(frozen=True)
class PatientFolder:
    patient_id: str
    location: Location
    documents: tuple[DocumentRef, ...]


@dataclass(frozen=True)
class SearchHit:
    doc: DocumentRef
    line_hits: tuple[tuple[int, str], ...]  # (1-based line number, line text)
    score: int


def content_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def kind_for_filename(filename: str) -> DocKind | None:
    prefix = filename.split("_", 1)[0]
    return PREFIX_KIND.get(prefix)


def _check_id(patient_id: str) -> None:
    if not patient_id or "/" in patient_id or "\\" in patient_id or patient_id in (".", ".."):
        raise InvalidId(f"invalid patient id {patient_id!r}")


class Store:
    """Handle over an initialized store root.

    Thread contract: writes are serialized per patient folder; operations
    on distinct patients may run in parallel; reads are lock-free with
    respect to completed writes.
    """

    def __init__(self, root: Path, layout: StoreLayout):
        self.root = Path(root)
        self.layout = layout
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        # Test hook: called with the journal state name at each move step.
        self._crash_hook: Callable[[str], None] | None = None

    # --- paths ------------------------------------------------------------

    @property
    def patient_root(self) -> Path:
        return self.root / self.layout.patient_root

    @property
    def specialty_root(self) -> Path:
        return self.root / self.layout.specialty_root

    def _journal_path(self) -> Path:
        return self.root / "store.journal"

    def _lock_for(self, patient_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(patient_id, threading.Lock())

    def _folder_path(self, patient_id: str) -> Path | None:
        central = self.patient_root / patient_id
        if central.is_dir():
            return central
        for name in self.layout.specialties:
            p = self.specialty_root / name / patient_id
            if p.is_dir():
                return p
        return None

    def _location_of(self, folder: Path) -> Location:
        if folder.parent == self.patient_root:
            return Location.central()
        return Location.at(folder.parent.name)

    def _folder_info(self, folder: Path) -> PatientFolder:
        docs = []
        for f in sorted(folder.iterdir()):
            if not f.is_file() or f.suffix != ".md":
                continue
            kind = kind_for_filename(f.name)
            if kind is None:
                continue
            docs.append(
                DocumentRef(
                    patient_id=folder.name,
                    doc_kind=kind,
                    filename=f.name,
                    created_at=f.stat().st_mtime,
                    content_digest=content_digest(f.read_text(encoding="utf-8")),
                )
            )
        return PatientFolder(folder.name, self._location_of(folder), tuple(docs))

    def _iter_folders(self) -> Iterator[Path]:
        if self.patient_root.is_dir():
            for p in sorted(self.patient_root.iterdir()):
                if p.is_dir():
                    yield p
        if self.specialty_root.is_dir():
            for spec in sorted(self.specialty_root.iterdir()):
                if spec.is_dir():
                    for p in sorted(spec.iterdir()):
                        if p.is_dir():
                            yield p

    # --- operations ---------------------------------------------------------

    def find_patient(self, name_or_id: str) -> list[PatientFolder]:
        needle = name_or_id.lower()
        out = []
        for folder in self._iter_folders():
            if needle in folder.name.lower():
                out.append(self._folder_info(folder))
                continue
            if any(needle in f.name.lower() for f in folder.iterdir() if f.is_file()):
                out.append(self._folder_info(folder))
        return out

    def get_patient(self, patient_id: str) -> PatientFolder:
        folder = self._folder_path(patient_id)
        if folder is None:
            raise UnknownPatient(patient_id)
        return self._folder_info(folder)

    def create_patient(self, patient_id: str, demographics: str) -> PatientFolder:
        _check_id(patient_id)
        with self._lock_for(patient_id):
            if self._folder_path(patient_id) is not None:
                raise DuplicatePatient(patient_id)
            folder = self.patient_root / patient_id
            folder.mkdir(parents=True)
            self._write_doc(folder, DocKind.HISTORY, demographics)
            return self._folder_info(folder)

    def store_document(self, patient_id: str, doc_kind: DocKind, content: str) -> DocumentRef:
        with self._lock_for(patient_id):
            folder = self._folder_path(patient_id)
            if folder is None:
                raise UnknownPatient(patient_id)
            filename = self._write_doc(folder, doc_kind, content)
            f = folder / filename
            return DocumentRef(
                patient_id=patient_id,
                doc_kind=doc_kind,
                filename=filename,
                created_at=f.stat().st_mtime,
                content_digest=content_digest(content),
            )

    def read_document(self, patient_id: str, filename: str) -> str:
        folder = self._folder_path(patient_id)
        if folder is None:
            raise UnknownPatient(patient_id)
        f = folder / filename
        if not f.is_file():
            raise FileNotFoundError(f"{patient_id}/{filename}")
        return f.read_text(encoding="utf-8")

    def _write_doc(self, folder: Path, doc_kind: DocKind, content: str) -> str:
        prefix = KIND_PREFIX[doc_kind]
        for seq in range(1, _SEQUENCE_MAX + 1):
            candidate = f"{prefix}_{seq:03d}.md"
            path = folder / candidate
            if not path.exists():
                tmp = folder / f".{candidate}.tmp"
                tmp.write_text(content, encoding="utf-8")
                os.replace(tmp, path)
                return candidate
        raise FilenameCollision(f"sequence exhausted for {prefix} in {folder.name}")

    def move_to_specialty(self, patient_id: str, specialty: str) -> PatientFolder:
        if specialty not in self.layout.specialties:
            raise UnknownSpecialty(specialty)
        with self._lock_for(patient_id):
            folder = self._folder_path(patient_id)
            if folder is None:
                raise UnknownPatient(patient_id)
            dst = self.specialty_root / specialty / patient_id
            if folder == dst:
                return self._folder_info(folder)
            self._journaled_move(folder, dst)
            return self._folder_info(dst)

    def discharge_to_central(self, patient_id: str) -> PatientFolder:
        with self._lock_for(patient_id):
            folder = self._folder_path(patient_id)
            if folder is None:
                raise UnknownPatient(patient_id)
            if self._location_of(folder).kind == "central":
                raise AlreadyCentral(patient_id)
            dst = self.patient_root / patient_id
            self._journaled_move(folder, dst)
            return self._folder_info(dst)

    def add_specialty(self, name: str) -> StoreLayout:
        """Explicit admin operation; never invoked by the agent loop."""
        new_layout = StoreLayout(
            self.layout.patient_root,
            self.layout.specialty_root,
            self.layout.specialties + (name,),
        )
        new_layout.validate()
        (self.specialty_root / name).mkdir(parents=True, exist_ok=True)
        (self.root / "layout.json").write_text(
            json.dumps(new_layout.to_json(), indent=2), encoding="utf-8"
        )
        self.layout = new_layout
        return new_layout

    # --- journaled move -----------------------------------------------------

    def _journal_append(self, record: dict) -> None:
        with self._journal_path().open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _journal_step(self, state: str, src: Path, dst: Path, move_id: str) -> None:
        self._journal_append(
            {
                "op": "move",
                "id": move_id,
                "src": str(src.relative_to(self.root)),
                "dst": str(dst.relative_to(self.root)),
                "state": state,
            }
        )
        if self._crash_hook is not None:
            self._crash_hook(state)

    def _journaled_move(self, src: Path, dst: Path) -> None:
        move_id = f"{time.time_ns()}-{src.name}"
        self._journal_step("begin", src, dst, move_id)
        if dst.exists():
            shutil.rmtree(dst)
        shutil.copytree(src, dst)
        self._journal_step("copied", src, dst, move_id)
        shutil.rmtree(src)
        self._journal_step("done", src, dst, move_id)

    def _recover_journal(self) -> None:
        journal = self._journal_path()
        if not journal.exists():
            return
        moves: dict[str, dict] = {}
        for line in journal.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                continue  # torn tail write from a crash
            entry = moves.setdefault(rec["id"], {"states": set(), "rec": rec})
            entry["states"].add(rec.get("state"))
        for entry in moves.values():
            states = entry["states"]
            rec = entry["rec"]
            src = self.root / rec["src"]
            dst = self.root / rec["dst"]
            if "done" in states:
                continue
            if "copied" in states:
                # Copy finished; roll forward by deleting the source.
                if src.exists():
                    shutil.rmtree(src)
            else:
                # Copy may be partial; roll back.
                if dst.exists() and src.exists():
                    shutil.rmtree(dst)
                elif dst.exists() and not src.exists():
                    # Source already gone: the copy must be complete; keep it.
                    pass
        journal.write_text("", encoding="utf-8")

    # --- search ---------------------------------------------------------------

    def search_keyword(
        self,
        query: str,
        scope: tuple[str, str | None] = ("all", None),
        limit: int = DEFAULT_SEARCH_LIMIT,
    ) -> list[SearchHit]:
        """Case-insensitive substring search, line-level hits.

        ``scope`` is ``("all", None)``, ``("patient", id)`` or
        ``("specialty", name)``. Hits are sorted by score (matching line
        count) descending, ties broken by (patient_id, filename), then
        truncated to ``limit`` documents.
        """
        term = query.strip().lower()
        if not term:
            raise EmptyQuery("query is empty after trimming")
        if limit < 1:
            raise ValueError("limit must be positive")
        hits: list[SearchHit] = []
        for folder in self._scoped_folders(scope):
            info = self._folder_info(folder)
            for doc in info.documents:
                text = (folder / doc.filename).read_text(encoding="utf-8")
                line_hits = tuple(
                    (i, line)
                    for i, line in enumerate(text.splitlines(), start=1)
                    if term in line.lower()
                )
                if line_hits:
                    hits.append(SearchHit(doc, line_hits, len(line_hits)))
        hits.sort(key=lambda h: (-h.score, h.doc.patient_id, h.doc.filename))
        return hits[:limit]

    def _scoped_folders(self, scope: tuple[str, str | None]) -> Iterable[Path]:
        kind, arg = scope
        if kind == "all":
            return self._iter_folders()
        if kind == "patient":
            folder = self._folder_path(arg or "")
            return [folder] if folder is not None else []
        if kind == "specialty":
            if arg not in self.layout.specialties:
                raise UnknownSpecialty(str(arg))
            base = self.specialty_root / str(arg)
            if not base.is_dir():
                return []
            return sorted(p for p in base.iterdir() if p.is_dir())
        raise ValueError(f"unknown scope kind {kind!r}")


def init_store(root: str | Path, layout: StoreLayout | None = None) -> Store:
    """Create or re-open a store at ``root``; idempotent over a valid store."""
    root = Path(root)
    layout = layout or StoreLayout()
    layout.validate()

    layout_file = root / "layout.json"
    if layout_file.exists():
        existing = StoreLayout.from_json(json.loads(layout_file.read_text(encoding="utf-8")))
        # Re-init must agree with what is on disk.
        if (existing.patient_root, existing.specialty_root) != (
            layout.patient_root,
            layout.specialty_root,
        ) or set(layout.specialties) - set(existing.specialties):
            raise CorruptLayout("existing store layout conflicts with requested layout")
        layout = existing

    try:
        root.mkdir(parents=True, exist_ok=True)
        (root / layout.patient_root).mkdir(exist_ok=True)
        spec_root = root / layout.specialty_root
        spec_root.mkdir(exist_ok=True)
        for name in layout.specialties:
            (spec_root / name).mkdir(exist_ok=True)
        if not layout_file.exists():
            layout_file.write_text(json.dumps(layout.to_json(), indent=2), encoding="utf-8")
    except PermissionError as exc:
        raise PathNotWritable(str(exc)) from exc

    store = Store(root, layout)
    store._recover_journal()
    return store

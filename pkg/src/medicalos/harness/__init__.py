"""Desk-scale benchmark pipeline: case loading, patient simulation, exam
matching, diagnosis scoring, and metric/report emission."""

from .cases import CaseSpec, bundled_fixture_dir, load_dataset
from .matching import ExamMatch, categorize_exam, match_exam, score_diagnosis
from .patient import simulate_patient_turn
from .runner import BenchmarkConfig, run_benchmark

__all__ = [
    "CaseSpec",
    "load_dataset",
    "bundled_fixture_dir",
    "ExamMatch",
    "match_exam",
    "categorize_exam",
    "score_diagnosis",
    "simulate_patient_turn",
    "BenchmarkConfig",
    "run_benchmark",
]

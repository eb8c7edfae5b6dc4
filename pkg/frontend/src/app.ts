// DOM wiring for the console shell. All rendered state comes from API
// responses; the only local state is the report viewer position, which is
// kept in sync with the server-side /viewer engine by sharing its logic.

import { ApiClient, ApiError } from "./api";
import { InquiryTurn, MedicationInput } from "./models";
import * as viewer from "./viewer";
import { approveReferral } from "./workflows";

const VIEWPORT_HEIGHT = 18;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setStatus(text: string, isError = false): void {
  const status = el<HTMLSpanElement>("status");
  status.textContent = text;
  status.className = isError ? "error" : "";
}

async function guarded(action: () => Promise<void>): Promise<void> {
  try {
    await action();
    setStatus("ok");
  } catch (err) {
    if (err instanceof ApiError) {
      setStatus(`${err.body.code}: ${err.body.message}`, true);
    } else {
      setStatus(String(err), true);
    }
  }
}

class Console {
  private viewerState: viewer.ViewerState | null = null;

  constructor(
    private readonly client: ApiClient,
    private readonly caseId: string,
    private readonly clinician: string,
  ) {}

  async refreshCase(): Promise<void> {
    const state = await this.client.getCase(this.caseId);
    el<HTMLPreElement>("case-state").textContent = JSON.stringify(state, null, 2);
  }

  async refreshTurns(): Promise<void> {
    const { turns } = await this.client.listTurns(this.caseId);
    const list = el<HTMLUListElement>("turns");
    list.replaceChildren(
      ...turns.map((turn) => {
        const item = document.createElement("li");
        item.textContent = `${turn.speaker}: ${turn.text}`;
        return item;
      }),
    );
  }

  async addTurn(turn: InquiryTurn): Promise<void> {
    await this.client.addTurn(this.caseId, turn);
    await this.refreshTurns();
  }

  async generateReport(): Promise<void> {
    const { report } = await this.client.generateReport(this.caseId);
    this.viewerState = viewer.openDocument(report, VIEWPORT_HEIGHT);
    this.renderViewport();
    await this.refreshCase();
  }

  async loadLatestReport(): Promise<void> {
    const listing = await this.client.listReports(this.caseId);
    if (listing.revisions.length === 0) return;
    const latest = listing.revisions[listing.revisions.length - 1];
    const { content } = await this.client.getReport(this.caseId, latest);
    this.viewerState = viewer.openDocument(content, VIEWPORT_HEIGHT);
    this.renderViewport();
  }

  scrollReport(delta: number): void {
    if (!this.viewerState) return;
    this.viewerState = viewer.scroll(this.viewerState, delta);
    this.renderViewport();
  }

  findInReport(keyword: string): void {
    if (!this.viewerState || !keyword) return;
    const count = viewer.matchCount(this.viewerState, keyword);
    el<HTMLSpanElement>("match-count").textContent = `${count} match(es)`;
    const jumped = viewer.gotoFirst(this.viewerState, keyword);
    if (jumped) {
      this.viewerState = jumped;
      this.renderViewport();
    }
  }

  private renderViewport(): void {
    if (!this.viewerState) return;
    const lines = viewer.viewport(this.viewerState).map((line, i) => {
      const lineno = this.viewerState!.topLine + i;
      const marker = lineno === this.viewerState!.cursorLine ? ">" : " ";
      return `${marker} ${String(lineno).padStart(4)}  ${line}`;
    });
    el<HTMLPreElement>("report-viewport").textContent = lines.join("\n");
  }

  async referral(specialty: string): Promise<void> {
    await approveReferral(this.client, this.caseId, specialty, this.clinician);
    await this.refreshCase();
  }

  async medications(meds: MedicationInput[]): Promise<void> {
    const plan = await this.client.planMedications(this.caseId, meds, this.clinician);
    el<HTMLPreElement>("medication-plan").textContent = plan.plan;
  }

  async discharge(): Promise<void> {
    await this.client.discharge(this.caseId, this.clinician);
    await this.refreshCase();
  }
}

function start(): void {
  el<HTMLFormElement>("connect-form").addEventListener("submit", (event) => {
    event.preventDefault();
    const baseUrl = el<HTMLInputElement>("base-url").value.trim() || "";
    const token = el<HTMLInputElement>("api-token").value.trim() || null;
    const caseId = el<HTMLInputElement>("case-id").value.trim();
    const clinician = el<HTMLInputElement>("clinician-name").value.trim();
    const client = new ApiClient(baseUrl, token);
    const ui = new Console(client, caseId, clinician);

    void guarded(async () => {
      await client.health();
      await ui.refreshCase();
      await ui.refreshTurns();
      await ui.loadLatestReport();
      el<HTMLElement>("console").hidden = false;
    });

    el<HTMLButtonElement>("refresh-case").onclick = () => void guarded(() => ui.refreshCase());
    el<HTMLFormElement>("turn-form").onsubmit = (e) => {
      e.preventDefault();
      const speaker = el<HTMLSelectElement>("speaker").value as InquiryTurn["speaker"];
      const text = el<HTMLInputElement>("turn-text").value;
      el<HTMLInputElement>("turn-text").value = "";
      void guarded(() => ui.addTurn({ speaker, text }));
    };
    el<HTMLButtonElement>("generate-report").onclick = () => void guarded(() => ui.generateReport());
    el<HTMLButtonElement>("scroll-up").onclick = () => ui.scrollReport(-3);
    el<HTMLButtonElement>("scroll-down").onclick = () => ui.scrollReport(3);
    el<HTMLButtonElement>("find-button").onclick = () =>
      ui.findInReport(el<HTMLInputElement>("find-keyword").value);
    el<HTMLFormElement>("referral-form").onsubmit = (e) => {
      e.preventDefault();
      void guarded(() => ui.referral(el<HTMLInputElement>("referral-specialty").value.trim()));
    };
    el<HTMLFormElement>("medications-form").onsubmit = (e) => {
      e.preventDefault();
      const raw = el<HTMLTextAreaElement>("medications-json").value;
      void guarded(() => ui.medications(JSON.parse(raw) as MedicationInput[]));
    };
    el<HTMLButtonElement>("discharge").onclick = () => void guarded(() => ui.discharge());
  });
}

if (typeof document !== "undefined") {
  start();
}

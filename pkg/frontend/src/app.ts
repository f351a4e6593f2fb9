/**
 * Wallet console bootstrap: polls the holder service for pending disclosure
 * requests and renders per-claim toggles with approve/deny actions.
 *
 * A fetch failure shows the offline banner and keeps the last rendered list
 * on screen; nothing is discarded client-side.
 */

import { HolderClient, OfflineError, type PendingRequest } from "./api.js";
import {
  approvalPayload,
  buildToggles,
  describeVerifier,
  freshnessSeconds,
  SubmitGuard,
  toggleClaim,
  type ClaimToggle,
} from "./requests.js";

const POLL_INTERVAL_MS = 3000;

interface RowState {
  request: PendingRequest;
  toggles: ClaimToggle[];
}

export class WalletConsole {
  private rows = new Map<string, RowState>();
  private guard = new SubmitGuard();

  constructor(
    private readonly client: HolderClient,
    private readonly root: HTMLElement,
    private readonly banner: HTMLElement,
  ) {}

  async refresh(): Promise<void> {
    let requests: PendingRequest[];
    try {
      requests = await this.client.pendingRequests();
      this.banner.hidden = true;
    } catch (err) {
      if (err instanceof OfflineError) {
        this.banner.hidden = false; // keep current rows on screen
        return;
      }
      throw err;
    }
    const seen = new Set<string>();
    for (const request of requests) {
      seen.add(request.request_id);
      if (!this.rows.has(request.request_id)) {
        this.rows.set(request.request_id, { request, toggles: buildToggles(request) });
      }
    }
    for (const id of [...this.rows.keys()]) {
      if (!seen.has(id)) {
        this.rows.delete(id);
      }
    }
    this.render();
  }

  private render(): void {
    this.root.replaceChildren();
    if (this.rows.size === 0) {
      const empty = document.createElement("p");
      empty.className = "empty";
      empty.textContent = "No pending disclosure requests.";
      this.root.appendChild(empty);
      return;
    }
    for (const state of this.rows.values()) {
      this.root.appendChild(this.renderRow(state));
    }
  }

  private renderRow(state: RowState): HTMLElement {
    const { request } = state;
    const card = document.createElement("section");
    card.className = "request";
    card.dataset.requestId = request.request_id;

    const heading = document.createElement("h2");
    heading.textContent = describeVerifier(request);
    card.appendChild(heading);

    if (request.job_summary) {
      const job = document.createElement("p");
      job.className = "job";
      job.textContent = request.job_summary;
      card.appendChild(job);
    }

    const countdown = freshnessSeconds(request, Date.now());
    if (countdown !== null) {
      const fresh = document.createElement("p");
      fresh.className = "countdown";
      fresh.textContent = `expires in ${countdown}s`;
      card.appendChild(fresh);
    }

    const list = document.createElement("ul");
    for (const toggle of state.toggles) {
      const item = document.createElement("li");
      const box = document.createElement("input");
      box.type = "checkbox";
      box.checked = toggle.selected;
      box.disabled = !toggle.permitted; // policy-forbidden claims stay off
      box.addEventListener("change", () => {
        state.toggles = toggleClaim(state.toggles, toggle.key);
        this.render();
      });
      const label = document.createElement("label");
      label.append(box, ` ${toggle.key}`);
      if (!toggle.permitted) {
        const note = document.createElement("em");
        note.textContent = " (not permitted by policy)";
        label.appendChild(note);
      }
      item.appendChild(label);
      list.appendChild(item);
    }
    card.appendChild(list);

    const actions = document.createElement("div");
    actions.className = "actions";
    const approve = document.createElement("button");
    approve.textContent = "Approve";
    approve.addEventListener("click", () => void this.approve(state));
    const deny = document.createElement("button");
    deny.textContent = "Deny";
    deny.addEventListener("click", () => void this.deny(state));
    actions.append(approve, deny);
    card.appendChild(actions);
    return card;
  }

  private async approve(state: RowState): Promise<void> {
    const id = state.request.request_id;
    if (!this.guard.begin(id)) {
      return;
    }
    try {
      const payload = approvalPayload(state.request, state.toggles);
      await this.client.approve(payload.request_id, payload.claims);
      this.rows.delete(id);
      this.render();
    } finally {
      this.guard.end(id);
    }
  }

  private async deny(state: RowState): Promise<void> {
    const id = state.request.request_id;
    if (!this.guard.begin(id)) {
      return;
    }
    try {
      await this.client.deny(id);
      this.rows.delete(id);
      this.render();
    } finally {
      this.guard.end(id);
    }
  }
}

function bootstrap(): void {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("holder") ?? "http://127.0.0.1:8401";
  const client = new HolderClient(base);
  const consoleRoot = document.getElementById("requests");
  const banner = document.getElementById("offline-banner");
  if (!consoleRoot || !banner) {
    throw new Error("index.html is missing #requests or #offline-banner");
  }
  const wallet = new WalletConsole(client, consoleRoot, banner);
  void wallet.refresh();
  setInterval(() => void wallet.refresh(), POLL_INTERVAL_MS);
}

if (typeof document !== "undefined") {
  bootstrap();
}

// App wiring: hash routing, 2 s polling, event delegation over re-rendered HTML.

import { ApiClient, ApiError, clearConnection, loadConnection, saveConnection } from "./api.js";
import {
  ComposerModel,
  ComposerError,
  GateName,
  ROTATION_GATES,
  TWO_QUBIT_GATES,
  composerToQasm,
  parseAngle,
  qasmToComposer,
} from "./composer.js";
import { AppState, POLL_INTERVAL_MS, initialState, refresh } from "./store.js";
import {
  renderComposer,
  renderDashboard,
  renderDevices,
  renderJobDetail,
  renderKeyEntry,
  renderShell,
} from "./views.js";

const state: AppState = initialState();
let pollTimer: number | undefined;

function root(): HTMLElement {
  return document.getElementById("app")!;
}

function currentRoute(): string {
  return window.location.hash.replace(/^#/, "") || "composer";
}

function render(): void {
  const route = currentRoute();
  state.route = route;
  let content: string;
  if (!state.client) {
    content = renderKeyEntry(state.authError);
  } else if (route.startsWith("job/")) {
    const [, jobId, tab] = route.split("/");
    const job = state.jobs.find((j) => j.id === jobId);
    content = job
      ? renderJobDetail(job, tab === "transpiled" ? "transpiled" : "result", state.resultView)
      : `<section class="card"><p class="pending">loading ${jobId}…</p></section>`;
  } else if (route.startsWith("devices")) {
    const id = route.split("/")[1];
    const selected = state.devices.find((d) => d.id === id) ?? state.devices[0];
    content = renderDevices(state.devices, selected);
  } else if (route.startsWith("jobs")) {
    content = renderDashboard(state.jobs);
  } else {
    content = renderComposer(state.composer, state.devices);
  }
  root().innerHTML = renderShell(content, route, state.client !== null);
}

async function poll(): Promise<void> {
  if (!state.client) return;
  try {
    await refresh(state);
    state.authError = "";
  } catch (err) {
    if (err instanceof ApiError && (err.status === 401 || err.status === 403)) {
      // expired/revoked credentials route back to the key screen
      disconnect(err.message);
      return;
    }
  }
  render();
}

function startPolling(): void {
  stopPolling();
  pollTimer = window.setInterval(poll, POLL_INTERVAL_MS);
}

function stopPolling(): void {
  if (pollTimer !== undefined) window.clearInterval(pollTimer);
  pollTimer = undefined;
}

function disconnect(message = ""): void {
  stopPolling();
  clearConnection();
  state.client = null;
  state.connection = null;
  state.authError = message;
  render();
}

async function connect(url: string, apiKey: string): Promise<void> {
  const conn = { url, apiKey };
  const client = new ApiClient(conn);
  try {
    await client.listDevices(); // credential probe
  } catch (err) {
    state.authError = err instanceof ApiError ? err.message : String(err);
    render();
    return;
  }
  saveConnection(conn);
  state.connection = conn;
  state.client = client;
  state.authError = "";
  await poll();
  startPolling();
}

function composerModelEdit(fn: (model: ComposerModel) => void): void {
  const draft = state.composer.model.clone();
  try {
    fn(draft);
    state.composer.model = draft;
    state.composer.message = "";
    state.composer.editorText = null;
  } catch (err) {
    state.composer.message = err instanceof ComposerError ? err.message : String(err);
  }
  render();
}

function handleCellClick(step: number, wire: number): void {
  const composer = state.composer;
  const palette = composer.palette;
  if (!palette) return;
  if (palette === "erase") {
    composerModelEdit((m) => {
      m.removeAt(step, wire);
    });
    return;
  }
  if ((TWO_QUBIT_GATES as readonly string[]).includes(palette)) {
    if (composer.pendingWire === null) {
      composer.pendingWire = wire;
      composer.message = `${palette}: now click the second wire`;
      render();
      return;
    }
    const first = composer.pendingWire;
    composer.pendingWire = null;
    composerModelEdit((m) => {
      m.placeAuto(palette as GateName, [first, wire]);
    });
    return;
  }
  let param: number | undefined;
  let paramText: string | undefined;
  if ((ROTATION_GATES as readonly string[]).includes(palette)) {
    try {
      param = parseAngle(composer.angleText);
      paramText = composer.angleText.trim();
    } catch (err) {
      composer.message = err instanceof ComposerError ? err.message : String(err);
      render();
      return;
    }
  }
  composerModelEdit((m) => {
    m.placeAuto(palette as GateName, [wire], param, paramText);
  });
}

async function runJob(qasm: string): Promise<void> {
  if (!state.client) return;
  const composer = state.composer;
  try {
    const resp = await state.client.submitJob({
      device_id: composer.deviceId,
      job_type: "sampling",
      name: "composer job",
      shots: composer.shots,
      payload: { qasm },
      options: composer.mitigation ? { mitigation: { readout: "pseudo_inverse" } } : {},
    });
    window.location.hash = `#job/${resp.job_id}`;
    await poll();
  } catch (err) {
    composer.message = err instanceof ApiError ? err.message : String(err);
    render();
  }
}

function wireEvents(): void {
  const app = root();
  app.addEventListener("submit", (ev) => {
    const form = ev.target as HTMLFormElement;
    if (form.id === "key-form") {
      ev.preventDefault();
      const data = new FormData(form);
      void connect(String(data.get("url")), String(data.get("api_key")));
    }
  });
  app.addEventListener("change", (ev) => {
    const el = ev.target as HTMLInputElement | HTMLSelectElement;
    const composer = state.composer;
    if (el.id === "angle") composer.angleText = el.value;
    else if (el.id === "run-device") composer.deviceId = el.value;
    else if (el.id === "run-shots") composer.shots = Math.max(1, parseInt(el.value, 10) || 1);
    else if (el.id === "run-mitigation") composer.mitigation = (el as HTMLInputElement).checked;
    else if (el.id === "wires") {
      const n = Math.max(1, Math.min(10, parseInt(el.value, 10) || 1));
      const fresh = new ComposerModel(n);
      for (const op of composer.model.orderedOps()) {
        if (op.wires.every((w) => w < n)) {
          try {
            fresh.place(op);
          } catch {
            // gates that no longer fit are dropped
          }
        }
      }
      composer.model = fresh;
      composer.editorText = null;
      composer.message = "";
      render();
    } else if (el.id === "qasm-editor") {
      composer.editorText = (el as unknown as HTMLTextAreaElement).value;
    }
  });
  app.addEventListener("click", (ev) => {
    const el = ev.target as HTMLElement;
    const composer = state.composer;
    if (el.id === "disconnect") {
      ev.preventDefault();
      disconnect();
      return;
    }
    const cancelId = el.getAttribute("data-cancel");
    if (cancelId && state.client) {
      void state.client.cancelJob(cancelId).then(poll, poll);
      return;
    }
    const gate = el.getAttribute("data-gate");
    if (gate) {
      composer.palette = composer.palette === gate ? null : gate;
      composer.pendingWire = null;
      composer.message = "";
      render();
      return;
    }
    const view = el.getAttribute("data-view");
    if (view === "raw" || view === "mitigated") {
      state.resultView = view;
      render();
      return;
    }
    if (el.classList.contains("cell")) {
      handleCellClick(Number(el.getAttribute("data-step")), Number(el.getAttribute("data-wire")));
      return;
    }
    if (el.id === "run-job") {
      void runJob(composerToQasm(composer.model));
      return;
    }
    if (el.id === "apply-qasm") {
      const editor = document.getElementById("qasm-editor") as HTMLTextAreaElement;
      try {
        composer.model = qasmToComposer(editor.value);
        composer.editorText = null;
        composer.message = "";
      } catch (err) {
        composer.message = err instanceof ComposerError ? err.message : String(err);
      }
      render();
      return;
    }
    if (el.id === "run-qasm") {
      const editor = document.getElementById("qasm-editor") as HTMLTextAreaElement;
      void runJob(editor.value);
    }
  });
  window.addEventListener("hashchange", render);
}

function boot(): void {
  wireEvents();
  const saved = loadConnection();
  if (saved) {
    void connect(saved.url, saved.apiKey);
  } else {
    render();
  }
}

boot();

// HTML renderers. Every view is a pure function of the store state so the
// app can re-render wholesale on each poll tick.

import { ComposerModel, ALL_GATES, ROTATION_GATES, TWO_QUBIT_GATES, composerToQasm } from "./composer.js";
import { histogramBars, renderHistogramSvg } from "./histogram.js";
import type { Device, Job } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderKeyEntry(error?: string): string {
  return `
  <section class="card key-entry">
    <h2>Connect</h2>
    <p>Enter the service URL and your API key. The key stays in this browser session.</p>
    ${error ? `<p class="error">${escapeHtml(error)}</p>` : ""}
    <form id="key-form">
      <label>Server URL <input name="url" placeholder="http://127.0.0.1:8000" required></label>
      <label>API key <input name="api_key" type="password" required></label>
      <button type="submit">Connect</button>
    </form>
  </section>`;
}

export function statusChip(status: Job["status"]): string {
  return `<span class="chip chip-${status}">${status}</span>`;
}

export function renderDashboard(jobs: Job[]): string {
  const rows = jobs
    .slice()
    .reverse()
    .map(
      (job) => `
      <tr data-job="${job.id}">
        <td><a href="#job/${job.id}">${job.id}</a></td>
        <td>${escapeHtml(job.name || "")}</td>
        <td>${job.job_type}</td>
        <td>${statusChip(job.status)}</td>
        <td>${job.device_id}</td>
        <td>${job.submitted_at ? job.submitted_at.slice(0, 19) : ""}</td>
        <td>${
          job.status === "queued" || job.status === "submitted"
            ? `<button class="cancel" data-cancel="${job.id}">cancel</button>`
            : ""
        }</td>
      </tr>`,
    )
    .join("");
  return `
  <section class="card">
    <h2>Jobs</h2>
    <table class="jobs">
      <thead><tr><th>id</th><th>name</th><th>type</th><th>status</th><th>device</th><th>submitted</th><th></th></tr></thead>
      <tbody>${rows || '<tr><td colspan="7" class="empty">no jobs yet</td></tr>'}</tbody>
    </table>
  </section>`;
}

function renderSamplingResult(job: Job, view: "raw" | "mitigated"): string {
  const result = job.result!;
  const shots = result.shots ?? job.shots ?? 0;
  const mitigated = result.counts_mitigated;
  const counts = view === "mitigated" && mitigated ? mitigated : (result.counts ?? {});
  const bars = histogramBars(counts as Record<string, number>, shots);
  const toggle = mitigated
    ? `<div class="toggle">
         <button data-view="raw" class="${view === "raw" ? "on" : ""}">raw</button>
         <button data-view="mitigated" class="${view === "mitigated" ? "on" : ""}">mitigated</button>
       </div>`
    : "";
  return `${toggle}${renderHistogramSvg(bars)}
    <table class="counts"><thead><tr><th>outcome</th><th>count</th><th>fraction</th></tr></thead>
    <tbody>${bars
      .map((b) => `<tr><td>${b.key}</td><td>${b.count}</td><td>${b.fraction.toFixed(4)}</td></tr>`)
      .join("")}</tbody></table>`;
}

function renderEstimationResult(job: Job): string {
  const result = job.result!;
  const groups = (result.per_group ?? [])
    .map(
      (g) => `
      <tr><td>${escapeHtml(g.basis)}</td><td>${g.shots}</td>
      <td class="mono">${escapeHtml(JSON.stringify(g.counts))}</td></tr>`,
    )
    .join("");
  return `
    <div class="scalar-card"><span class="label">expectation value</span>
      <span class="value">${result.value}</span></div>
    <table class="groups"><thead><tr><th>basis</th><th>shots</th><th>counts</th></tr></thead>
    <tbody>${groups}</tbody></table>`;
}

function renderMultiResult(job: Job): string {
  const result = job.result!;
  const shots = result.shots ?? 0;
  return (result.results ?? [])
    .map(
      (counts, i) => `
      <h4>circuit ${i}</h4>
      ${renderHistogramSvg(histogramBars(counts, shots))}`,
    )
    .join("");
}

export function renderJobDetail(job: Job, tab: "result" | "transpiled", view: "raw" | "mitigated"): string {
  let body = "";
  if (job.status === "failed") {
    body = `<p class="error">${escapeHtml(job.error_message ?? "failed")}</p>`;
  } else if (job.status !== "succeeded") {
    body = `<p class="pending">job is ${job.status}…</p>`;
  } else if (tab === "transpiled") {
    const qasm = job.result?.transpiled_qasm;
    body = qasm
      ? `<pre class="qasm">${escapeHtml(qasm)}</pre>`
      : '<p class="empty">no transpiled program stored for this job</p>';
  } else if (job.job_type === "sampling") {
    body = renderSamplingResult(job, view);
  } else if (job.job_type === "estimation") {
    body = renderEstimationResult(job);
  } else if (job.job_type === "multi_manual") {
    body = renderMultiResult(job);
  } else {
    body = `<pre class="qasm">${escapeHtml(JSON.stringify(job.result, null, 2))}</pre>`;
  }
  return `
  <section class="card">
    <h2>${job.id} ${statusChip(job.status)}</h2>
    <p class="meta">${escapeHtml(job.name || "")} · ${job.job_type} · ${job.device_id} · ${job.shots ?? ""} shots</p>
    <nav class="tabs">
      <a href="#job/${job.id}" class="${tab === "result" ? "on" : ""}">result</a>
      <a href="#job/${job.id}/transpiled" class="${tab === "transpiled" ? "on" : ""}">transpiled QASM</a>
    </nav>
    ${body}
  </section>`;
}

export function renderDevices(devices: Device[], selected?: Device): string {
  const list = devices
    .map(
      (d) => `
      <li><a href="#devices/${d.id}" class="${selected?.id === d.id ? "on" : ""}">
        ${d.id} <small>${d.n_qubits}q · ${d.status}</small></a></li>`,
    )
    .join("");
  return `
  <section class="card">
    <h2>Devices</h2>
    <div class="split">
      <ul class="device-list">${list}</ul>
      <div class="device-detail">${selected ? renderDeviceDetail(selected) : "<p class='empty'>select a device</p>"}</div>
    </div>
  </section>`;
}

export function topologySvg(device: Device, size = 260): string {
  const n = device.n_qubits;
  const r = size / 2 - 30;
  const cx = size / 2;
  const cy = size / 2;
  const pos = (q: number) => {
    const angle = (2 * Math.PI * q) / n - Math.PI / 2;
    return [cx + r * Math.cos(angle), cy + r * Math.sin(angle)];
  };
  const edges = device.edges
    .map(([a, b]) => {
      const [x1, y1] = pos(a);
      const [x2, y2] = pos(b);
      return `<line x1="${x1}" y1="${y1}" x2="${x2}" y2="${y2}" class="edge"/>`;
    })
    .join("");
  const nodes = Array.from({ length: n }, (_, q) => {
    const [x, y] = pos(q);
    return `<circle cx="${x}" cy="${y}" r="14" class="node"/><text x="${x}" y="${y + 4}" text-anchor="middle" class="node-label">${q}</text>`;
  }).join("");
  return `<svg width="${size}" height="${size}" viewBox="0 0 ${size} ${size}" class="topology">${edges}${nodes}</svg>`;
}

export function renderDeviceDetail(device: Device): string {
  const rows = device.readout_errors
    .map((e, q) => `<tr><td>q${q}</td><td>${e.eps01}</td><td>${e.eps10}</td></tr>`)
    .join("");
  return `
    <h3>${device.id} <span class="chip chip-${device.status === "available" ? "succeeded" : "failed"}">${device.status}</span></h3>
    ${topologySvg(device)}
    <p class="meta">basis: ${device.basis_gates.join(", ")} · calibrated ${device.calibrated_at ?? "never"}</p>
    <table class="readout"><thead><tr><th>qubit</th><th>eps01</th><th>eps10</th></tr></thead>
    <tbody>${rows}</tbody></table>`;
}

export interface ComposerViewState {
  model: ComposerModel;
  palette: string | null; // selected gate name
  pendingWire: number | null; // first wire of a 2q placement
  angleText: string;
  deviceId: string;
  shots: number;
  mitigation: boolean;
  message: string;
  editorText: string | null; // non-null when the code editor has unapplied text
}

export function renderComposer(state: ComposerViewState, devices: Device[]): string {
  const model = state.model;
  const steps = Math.max(model.nSteps + 1, 6);
  const palette = ALL_GATES.map(
    (g) =>
      `<button class="palette ${state.palette === g ? "on" : ""}" data-gate="${g}">${g}</button>`,
  ).join("");
  let grid = '<table class="grid"><thead><tr><th></th>';
  for (let s = 0; s < steps; s++) grid += `<th>${s}</th>`;
  grid += "</tr></thead><tbody>";
  for (let w = 0; w < model.nWires; w++) {
    grid += `<tr><th>q${w}</th>`;
    for (let s = 0; s < steps; s++) {
      const op = model.occupied(s, w);
      let label = "";
      let cls = "cell";
      if (op) {
        cls += " filled";
        if (op.name === "measure") label = "M";
        else if (op.wires.length === 2) {
          const role = op.wires[0] === w ? (op.name === "swap" ? "x" : "●") : op.name === "swap" ? "x" : op.name === "cx" ? "⊕" : "●";
          label = `${op.name}:${role}`;
          cls += " twoq";
        } else label = op.param !== undefined ? `${op.name}(${op.paramText ?? op.param.toFixed(2)})` : op.name;
        if (s > model.measureStep(w)) cls += " dead";
      }
      if (state.pendingWire === w) cls += " pending";
      grid += `<td class="${cls}" data-step="${s}" data-wire="${w}">${label}</td>`;
    }
    grid += "</tr>";
  }
  grid += "</tbody></table>";

  const deviceOptions = devices
    .map((d) => `<option value="${d.id}" ${d.id === state.deviceId ? "selected" : ""}>${d.id}</option>`)
    .join("");
  const needsAngle = state.palette !== null && (ROTATION_GATES as readonly string[]).includes(state.palette);
  const qasm = state.editorText ?? composerToQasm(model);
  return `
  <section class="card">
    <h2>Composer</h2>
    <div class="composer-controls">
      <div class="palette-box">${palette}
        <button class="palette danger" data-gate="erase">erase</button>
      </div>
      <label class="${needsAngle ? "" : "hidden"}">angle <input id="angle" value="${escapeHtml(state.angleText)}" size="8"></label>
      <label>wires <input id="wires" type="number" min="1" max="10" value="${model.nWires}" size="3"></label>
    </div>
    <p class="hint">${
      state.palette
        ? (TWO_QUBIT_GATES as readonly string[]).includes(state.palette)
          ? `placing ${state.palette}: click the first wire, then the second (same column)`
          : `placing ${state.palette}: click a cell`
        : "pick a gate, then click the grid"
    }</p>
    ${state.message ? `<p class="error">${escapeHtml(state.message)}</p>` : ""}
    ${grid}
    <div class="run-controls">
      <select id="run-device">${deviceOptions}</select>
      <label>shots <input id="run-shots" type="number" min="1" value="${state.shots}"></label>
      <label><input id="run-mitigation" type="checkbox" ${state.mitigation ? "checked" : ""}> readout mitigation</label>
      <button id="run-job">Run</button>
    </div>
    <h3>Code editor</h3>
    <textarea id="qasm-editor" rows="${qasm.split("\n").length + 1}" spellcheck="false">${escapeHtml(qasm)}</textarea>
    <div class="editor-controls">
      <button id="apply-qasm">apply to grid</button>
      <button id="run-qasm">run code as-is</button>
    </div>
  </section>`;
}

export function renderShell(content: string, route: string, connected: boolean): string {
  const tab = (hash: string, label: string) =>
    `<a href="#${hash}" class="${route.startsWith(hash) ? "on" : ""}">${label}</a>`;
  return `
  <header>
    <h1>qstack console</h1>
    ${
      connected
        ? `<nav>${tab("composer", "composer")}${tab("jobs", "jobs")}${tab("devices", "devices")}
           <a href="#" id="disconnect">disconnect</a></nav>`
        : ""
    }
  </header>
  <main>${content}</main>`;
}

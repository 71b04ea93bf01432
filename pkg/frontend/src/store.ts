// Single app store updated by poll responses; views re-render from it.

import { ApiClient, Connection } from "./api.js";
import { ComposerModel } from "./composer.js";
import type { Device, Job } from "./types.js";
import type { ComposerViewState } from "./views.js";

export const POLL_INTERVAL_MS = 2000;

export interface AppState {
  connection: Connection | null;
  client: ApiClient | null;
  jobs: Job[];
  devices: Device[];
  route: string;
  authError: string;
  resultView: "raw" | "mitigated";
  composer: ComposerViewState;
}

export function initialComposer(): ComposerViewState {
  return {
    model: new ComposerModel(2),
    palette: null,
    pendingWire: null,
    angleText: "pi/2",
    deviceId: "",
    shots: 1000,
    mitigation: false,
    message: "",
    editorText: null,
  };
}

export function initialState(): AppState {
  return {
    connection: null,
    client: null,
    jobs: [],
    devices: [],
    route: "composer",
    authError: "",
    resultView: "raw",
    composer: initialComposer(),
  };
}

export async function refresh(state: AppState): Promise<void> {
  if (!state.client) return;
  const [jobs, devices] = await Promise.all([state.client.listJobs(), state.client.listDevices()]);
  state.jobs = jobs;
  state.devices = devices;
  if (!state.composer.deviceId && devices.length > 0) {
    state.composer.deviceId = devices[0].id;
  }
}

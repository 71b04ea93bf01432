// Wire types mirroring the server's JSON documents.

export interface JobResult {
  counts?: Record<string, number>;
  counts_raw?: Record<string, number>;
  counts_mitigated?: Record<string, number>;
  results?: Record<string, number>[];
  results_mitigated?: Record<string, number>[];
  shots?: number;
  value?: number;
  identity_constant?: number;
  per_group?: { basis: string; shots: number; counts: Record<string, number> }[];
  transpiled_qasm?: string;
  initial_layout?: number[];
  final_layout?: number[];
  metrics?: { gate_count: number; two_qubit_count: number; depth: number };
  seed?: number;
  [key: string]: unknown;
}

export interface Job {
  id: string;
  owner: string;
  device_id: string;
  job_type: "sampling" | "estimation" | "multi_manual" | "session";
  status: "submitted" | "queued" | "running" | "succeeded" | "failed" | "cancelled";
  name: string;
  description: string;
  shots: number | null;
  payload: Record<string, unknown>;
  options: Record<string, unknown>;
  result: JobResult | null;
  error_message: string | null;
  submitted_at: string | null;
  started_at: string | null;
  ended_at: string | null;
}

export interface ReadoutError {
  eps01: number;
  eps10: number;
}

export interface Device {
  id: string;
  n_qubits: number;
  edges: [number, number][];
  basis_gates: string[];
  readout_errors: ReadoutError[];
  status: "available" | "unavailable";
  calibrated_at: string | null;
  calibration?: number[][][];
}

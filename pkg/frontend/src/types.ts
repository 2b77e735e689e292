/** Payload shapes of the loopback HTTP API (v1). */

export interface ScreeningResult {
  probabilities: Record<string, number>;
  predicted: string;
  triage: string;
  model_name: string;
  model_fingerprint: string;
  inference_ms: number;
  timestamp: string;
}

export interface CaseEntry {
  case_id: string;
  result: ScreeningResult;
  operator_decision: string;
  notes: string;
}

export interface ModelInfo {
  model_name: string;
  class_names: string[];
  param_count: number;
  node_count: number;
}

export interface HealthInfo {
  status: string;
  model_name: string;
}

/** Operator decision vocabulary; must match the service exactly. */
export const DECISIONS = ["isolated", "referred_pcr", "released"] as const;
export type Decision = (typeof DECISIONS)[number];

export const PENDING = "pending";

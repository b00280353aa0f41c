// API payload shapes, mirrored 1:1 from the service. The UI renders nothing
// that is not present in these payloads.

export type ControlList = "USML" | "NRC" | "CCL" | "EAR99";
export type ItemStatus =
  | "SUBMITTED"
  | "REFINING"
  | "RETRIEVING"
  | "CLASSIFYING"
  | "VALIDATING"
  | "AWAITING_HUMAN"
  | "FINALIZED"
  | "FAILED";

export const CONTROL_LISTS: ControlList[] = ["USML", "NRC", "CCL", "EAR99"];

export interface Prediction {
  hrp_flag: boolean;
  label: ControlList;
  risk_level: "LEVEL1" | "LEVEL2" | "LOW";
  confidence: number;
}

export interface EvidenceRow {
  snippet_id: string;
  section_id: string;
  control_list: string;
  verbatim_text: string;
  trace_id: string;
}

export interface VerdictView {
  verdict: "AGREE" | "REVIEW" | "CONFLICT";
  coverage_count: number;
  conflict_lists: string[];
  notes: string;
}

export interface RunCardSummary {
  run_card_id: string;
  config_hash: string;
  snapshot_id: string;
  model_versions: Record<string, string>;
}

export interface ResultView {
  item_id: string;
  status: ItemStatus;
  prediction: Prediction | null;
  reasoning_steps: string[];
  evidence_rows: EvidenceRow[];
  verdict: VerdictView | null;
  override: string;
  error: string;
  run_card: RunCardSummary;
  advisory_feedback: AdvisoryFeedback[];
}

export interface AdvisoryFeedback {
  item_id: string;
  reviewer_id: string;
  action: string;
  rationale: string;
  override_label: string | null;
  rating: number | null;
  policy_ref: string | null;
}

export interface SubmitRequest {
  manufacturer: string;
  equipment_or_service: string;
  model_no: string;
  description?: string | null;
  use_description?: boolean;
}

export interface FeedbackRequest {
  action: "ACCEPT" | "OVERRIDE";
  rationale: string;
  override_label?: ControlList;
  rating?: number;
  policy_ref?: string;
}

export interface VersionInfo {
  model_identifier: string;
  index_snapshot_id: string;
  config_hash: string;
  schema_version: number;
  on_prem: boolean;
}

export interface VersionStrip {
  model_identifier: string;
  index_snapshot: string;
  timestamp: string;
}

export interface BatchRowStatus {
  row: number;
  item_id: string;
  status: string;
  error: string;
}

export interface BatchStatus {
  batch_id: string;
  status: "running" | "complete";
  items: BatchRowStatus[];
}

export interface BatchJsonDownload {
  version_strip: VersionStrip;
  results: unknown[];
}

/** The exported CSV's strip fields must equal the live /version payload. */
export function stripMatchesVersion(strip: VersionStrip, version: VersionInfo): boolean {
  return (
    strip.model_identifier === version.model_identifier &&
    strip.index_snapshot === version.index_snapshot_id
  );
}

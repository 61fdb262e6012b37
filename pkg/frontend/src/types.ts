/** Wire types for the review service HTTP API.
 *
 * These mirror the JSON the service actually emits; nothing here is
 * invented client-side. Offsets are UTF-16 code unit indices into
 * `sentence_text`, end-exclusive, same convention as the backend.
 */

export type Level = "High" | "Medium" | "Low";

export type Partition = "catalog_dataset" | "external_dataset" | "non_dataset";

export type Decision = "accept_use" | "accept_mention" | "reject" | "adjust_span";

export interface CandidateOut {
  level: Level;
  pattern_id: string;
  start: number;
  end: number;
  surface: string;
}

export interface QueueItem {
  item_id: string;
  doc_id: string;
  section_index: number;
  sentence_index: number;
  start: number;
  end: number;
  surface: string;
  sentence_text: string;
  section_label: string;
  partition: Partition;
  study_id: number | null;
  similarity: number;
  centered_score: number;
  level: Level | null;
  candidates: CandidateOut[];
}

export interface QueuePage {
  items: QueueItem[];
  remaining: number;
}

/** POST /verdicts request body. `adjusted` only with decision "adjust_span". */
export interface VerdictBody {
  item_id: string;
  decision: Decision;
  adjusted?: [number, number] | null;
  reviewer?: string;
}

export interface VerdictRecord {
  item_id: string;
  decision: Decision;
  adjusted: [number, number] | null;
  reviewer: string;
  timestamp: string;
}

export interface VerdictAck {
  acknowledged: VerdictRecord;
  remaining: number;
}

export interface Health {
  status: string;
  items: number;
  verdicts: number;
}

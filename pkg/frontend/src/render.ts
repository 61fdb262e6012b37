/** Pure view models. No DOM here; main.ts turns these into elements and
 * the tests assert on them directly.
 */

import { splitHighlight, type HighlightSegments } from "./highlight.js";
import type { Level, Partition, QueueItem } from "./types.js";

const LEVEL_ORDER: Record<Level, number> = { High: 0, Medium: 1, Low: 2 };

const PARTITION_TEXT: Record<Partition, string> = {
  catalog_dataset: "catalog dataset",
  external_dataset: "external dataset",
  non_dataset: "non-dataset",
};

export interface ItemView {
  itemId: string;
  /** e.g. "doc42 / Data / sentence 3" */
  locationLine: string;
  segments: HighlightSegments;
  /** Offsets the highlight was built from, echoed for verification. */
  span: [number, number];
  /** True when the segments show an in-progress adjustment, not the
   * predicted span. */
  adjusting: boolean;
  partition: Partition;
  partitionLine: string;
  matchLine: string;
  sentenceLevel: Level | null;
  /** One line per candidate, strongest level first, document order
   * within a level. */
  patternLines: string[];
}

export interface EmptyView {
  message: string;
}

function formatMatch(item: QueueItem): string {
  const sim = item.similarity.toFixed(3);
  if (item.study_id !== null) {
    return `study ${item.study_id} (similarity ${sim})`;
  }
  return `no catalog match (similarity ${sim})`;
}

function patternLine(level: Level, patternId: string, start: number, end: number, surface: string): string {
  return `${level.padEnd(6)} ${patternId}  [${start}, ${end})  "${surface}"`;
}

/** Build everything the review screen shows for one item.
 *
 * `selection` is the proposed span while an adjustment is in progress;
 * the highlight then tracks the proposal instead of the prediction so
 * the reviewer sees the boundaries they are about to submit.
 */
export function renderItem(item: QueueItem, selection?: [number, number]): ItemView {
  const span: [number, number] = selection ?? [item.start, item.end];
  const segments = splitHighlight(item.sentence_text, span[0], span[1]);

  const candidates = [...item.candidates].sort((a, b) => {
    const byLevel = LEVEL_ORDER[a.level] - LEVEL_ORDER[b.level];
    return byLevel !== 0 ? byLevel : a.start - b.start;
  });

  return {
    itemId: item.item_id,
    locationLine: `${item.doc_id} / ${item.section_label} / sentence ${item.sentence_index}`,
    segments,
    span,
    adjusting: selection !== undefined,
    partition: item.partition,
    partitionLine: PARTITION_TEXT[item.partition],
    matchLine: formatMatch(item),
    sentenceLevel: item.level,
    patternLines: candidates.map((c) => patternLine(c.level, c.pattern_id, c.start, c.end, c.surface)),
  };
}

export function renderEmpty(remaining: number): EmptyView {
  if (remaining > 0) {
    // local buffer drained but the server still has items: prompt a refresh
    return { message: `${remaining} item(s) pending on the server. Press g to fetch more.` };
  }
  return { message: "Queue empty. Nothing left to review." };
}

/** Split a sentence into before / highlight / after around a span.
 *
 * The invariant the whole UI leans on: the highlighted slice is exactly
 * `text.slice(start, end)` of the item's own sentence_text, nothing
 * re-tokenized or trimmed. Rendering then concatenates the three parts
 * back, so `before + highlight + after === text` always holds.
 */

export interface HighlightSegments {
  before: string;
  highlight: string;
  after: string;
}

export function splitHighlight(text: string, start: number, end: number): HighlightSegments {
  if (!Number.isInteger(start) || !Number.isInteger(end)) {
    throw new RangeError(`span offsets must be integers, got (${start}, ${end})`);
  }
  if (start < 0 || end > text.length || start > end) {
    throw new RangeError(`span (${start}, ${end}) out of range for text of length ${text.length}`);
  }
  return {
    before: text.slice(0, start),
    highlight: text.slice(start, end),
    after: text.slice(end),
  };
}

/** Single-key command map. Pure lookup so the bindings are testable and
 * the help footer can be generated from the same table.
 */

export type Mode = "review" | "adjust";

export type Command =
  | { kind: "decide"; decision: "accept_use" | "accept_mention" | "reject" }
  | { kind: "skip" }
  | { kind: "refresh" }
  | { kind: "retry" }
  | { kind: "begin_adjust" }
  | { kind: "commit_adjust" }
  | { kind: "cancel_adjust" }
  | { kind: "move"; which: "start" | "end"; delta: number };

interface Binding {
  key: string;
  shift?: boolean;
  mode: Mode;
  command: Command;
  help: string;
}

// review mode: one key per decision, no chords
export const BINDINGS: Binding[] = [
  { key: "a", mode: "review", command: { kind: "decide", decision: "accept_use" }, help: "accept as data use" },
  { key: "m", mode: "review", command: { kind: "decide", decision: "accept_mention" }, help: "accept as mention" },
  { key: "x", mode: "review", command: { kind: "decide", decision: "reject" }, help: "reject" },
  { key: "j", mode: "review", command: { kind: "begin_adjust" }, help: "adjust the span" },
  { key: "s", mode: "review", command: { kind: "skip" }, help: "skip for now" },
  { key: "g", mode: "review", command: { kind: "refresh" }, help: "refresh the queue" },
  { key: "u", mode: "review", command: { kind: "retry" }, help: "retry unsent verdicts" },
  { key: "Enter", mode: "adjust", command: { kind: "commit_adjust" }, help: "submit adjusted span" },
  { key: "Escape", mode: "adjust", command: { kind: "cancel_adjust" }, help: "cancel adjustment" },
  { key: "ArrowLeft", mode: "adjust", command: { kind: "move", which: "end", delta: -1 }, help: "shrink end" },
  { key: "ArrowRight", mode: "adjust", command: { kind: "move", which: "end", delta: 1 }, help: "grow end" },
  { key: "ArrowLeft", shift: true, mode: "adjust", command: { kind: "move", which: "start", delta: -1 }, help: "grow start" },
  { key: "ArrowRight", shift: true, mode: "adjust", command: { kind: "move", which: "start", delta: 1 }, help: "shrink start" },
];

export function commandFor(key: string, mode: Mode, shift = false): Command | null {
  for (const b of BINDINGS) {
    if (b.mode === mode && b.key === key && (b.shift ?? false) === shift) {
      return b.command;
    }
  }
  return null;
}

export function helpLines(mode: Mode): string[] {
  return BINDINGS.filter((b) => b.mode === mode).map(
    (b) => `${b.shift ? "Shift+" : ""}${b.key}  ${b.help}`,
  );
}

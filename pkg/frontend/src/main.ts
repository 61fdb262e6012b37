/** Browser entry point. Everything interesting lives in the pure
 * modules; this file only moves view models into the DOM and key events
 * into session calls.
 */

import { ReviewApi } from "./api.js";
import { commandFor, helpLines, type Mode } from "./keys.js";
import { renderEmpty, renderItem } from "./render.js";
import { ReviewSession } from "./session.js";

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing #${id}`);
  return node;
}

function currentMode(session: ReviewSession): Mode {
  return session.selection === null ? "review" : "adjust";
}

function draw(session: ReviewSession): void {
  const sentence = el("sentence");
  const meta = el("meta");
  const status = el("status");
  const help = el("help");

  const item = session.current();
  if (item === null) {
    sentence.textContent = renderEmpty(session.remaining).message;
    sentence.className = "empty";
    meta.textContent = "";
  } else {
    const view = renderItem(item, session.selection ?? undefined);
    sentence.className = view.adjusting ? "adjusting" : "";
    sentence.replaceChildren();
    sentence.append(view.segments.before);
    const mark = document.createElement("mark");
    mark.textContent = view.segments.highlight;
    if (view.adjusting) {
      // boundary handles so the proposed offsets are visible mid-edit
      const left = document.createElement("span");
      left.className = "handle";
      left.textContent = "[";
      const right = document.createElement("span");
      right.className = "handle";
      right.textContent = "]";
      sentence.append(left, mark, right);
    } else {
      sentence.append(mark);
    }
    sentence.append(view.segments.after);

    const lines = [
      view.locationLine,
      `span [${view.span[0]}, ${view.span[1]})`,
      `partition: ${view.partitionLine}`,
      `match: ${view.matchLine}`,
      `sentence level: ${view.sentenceLevel ?? "none"}`,
      ...view.patternLines.map((line) => `  ${line}`),
    ];
    meta.textContent = lines.join("\n");
  }

  const bits = [`${session.remaining} remaining`];
  if (session.unsent > 0) bits.push(`${session.unsent} unsent`);
  if (session.lastError !== null) bits.push(`error: ${session.lastError}`);
  status.textContent = bits.join("  |  ");
  help.textContent = helpLines(currentMode(session)).join("   ");
}

async function boot(): Promise<void> {
  const api = new ReviewApi(window.location.origin);
  const reviewer = new URLSearchParams(window.location.search).get("reviewer") ?? "anonymous";
  const session = new ReviewSession(api, reviewer);

  document.addEventListener("keydown", (event) => {
    const command = commandFor(event.key, currentMode(session), event.shiftKey);
    if (command === null) return;
    event.preventDefault();
    switch (command.kind) {
      case "decide":
        session.submit(command.decision);
        break;
      case "skip":
        session.skip();
        break;
      case "refresh":
        void session.refresh().then(() => draw(session));
        break;
      case "retry":
        void session.retry().then(() => draw(session));
        break;
      case "begin_adjust":
        session.beginAdjust();
        break;
      case "commit_adjust":
        session.submit("adjust_span");
        break;
      case "cancel_adjust":
        session.cancelAdjust();
        break;
      case "move":
        session.moveBoundary(command.which, command.delta);
        break;
    }
    draw(session);
  });

  window.addEventListener("online", () => {
    void session.retry().then(() => draw(session));
  });
  // verdicts parked by an outage drain on their own once the service is back
  setInterval(() => {
    if (session.unsent > 0) void session.retry().then(() => draw(session));
  }, 5000);

  try {
    await session.refresh();
  } catch (err) {
    session.lastError = err instanceof Error ? err.message : String(err);
  }
  draw(session);
}

void boot();

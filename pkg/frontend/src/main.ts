import { ApiClient, ApiError, DuplicateRatingError } from "./api.js";
import { LocalStorageAdapter, RetryQueue } from "./queue.js";
import { AnnotationSession } from "./session.js";
import type { Plan, PlanItem } from "./types.js";

const api = new ApiClient("");

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function app(): HTMLElement {
  return document.getElementById("app")!;
}

function renderLogin(): void {
  const root = app();
  root.replaceChildren();
  const box = el("div", "login");
  box.appendChild(el("h1", undefined, "Sentence annotation"));
  box.appendChild(el("p", undefined, "Enter your annotator id to begin or resume."));
  const input = el("input");
  input.placeholder = "annotator id";
  input.autofocus = true;
  const button = el("button", undefined, "Start");
  const error = el("p", "error");
  box.append(input, button, error);
  root.appendChild(box);

  const start = async () => {
    const annotator = input.value.trim();
    if (!annotator) return;
    try {
      const [plan, progress] = await Promise.all([
        api.fetchPlan(annotator),
        api.fetchProgress(annotator),
      ]);
      const session = new AnnotationSession(plan, progress);
      const queue = new RetryQueue(new LocalStorageAdapter(`simpctl-queue-${annotator}`));
      await queue.flush((records) => api.postRatings(records)).catch(() => undefined);
      renderSession(session, queue);
    } catch (err) {
      error.textContent =
        err instanceof ApiError && err.status === 404
          ? `No plan found for "${annotator}".`
          : `Could not reach the server (${String(err)}).`;
    }
  };
  button.onclick = start;
  input.onkeydown = (event) => {
    if (event.key === "Enter") void start();
  };
}

function renderSession(session: AnnotationSession, queue: RetryQueue): void {
  const root = app();
  root.replaceChildren();
  if (session.isDone()) {
    renderDone(session);
    return;
  }
  const item = session.current!;
  root.appendChild(renderHeader(session));
  root.appendChild(renderItem(session, item));
  root.appendChild(renderControls(session, queue, item));
}

function renderHeader(session: AnnotationSession): HTMLElement {
  const header = el("header");
  header.appendChild(
    el(
      "div",
      "progress-text",
      `Annotator ${session.plan.annotator} - item ${session.currentIndex + 1} of ` +
        `${session.items.length} (${session.submittedCount()} submitted)`,
    ),
  );
  const bar = el("div", "progress-bar");
  const fill = el("div", "progress-fill");
  fill.style.width = `${Math.round(session.progressFraction() * 100)}%`;
  bar.appendChild(fill);
  header.appendChild(bar);
  return header;
}

function renderItem(session: AnnotationSession, item: PlanItem): HTMLElement {
  const container = el("main");
  const sourceCard = el("section", "card source-card");
  sourceCard.appendChild(el("h2", undefined, "Original sentence"));
  sourceCard.appendChild(el("p", "sentence", item.source));
  container.appendChild(sourceCard);

  item.outputs.forEach((output, outputIndex) => {
    const label = item.labels[outputIndex] ?? `Output ${outputIndex + 1}`;
    const card = el("section", "card output-card");
    card.appendChild(el("h2", undefined, label));
    card.appendChild(el("p", "sentence", output));
    for (const criterion of session.plan.criteria) {
      card.appendChild(renderLikert(session, item, outputIndex, criterion.key, criterion.prompt));
    }
    container.appendChild(card);
  });
  return container;
}

function renderLikert(
  session: AnnotationSession,
  item: PlanItem,
  outputIndex: number,
  criterion: string,
  prompt: string,
): HTMLElement {
  const block = el("fieldset", "likert");
  block.appendChild(el("legend", undefined, prompt));
  const row = el("div", "likert-options");
  session.plan.scale.forEach((optionLabel, i) => {
    const value = i + 1;
    const name = `${item.item_id}|${outputIndex}|${criterion}`;
    const label = el("label", "likert-option");
    const radio = el("input");
    radio.type = "radio";
    radio.name = name;
    radio.value = String(value);
    radio.checked = session.answerOf(item.item_id, outputIndex, criterion) === value;
    radio.onchange = () => {
      session.setAnswer(item.item_id, outputIndex, criterion, value);
      const next = document.getElementById("next-button") as HTMLButtonElement | null;
      if (next) next.disabled = !session.canProceed();
    };
    label.append(radio, el("span", undefined, optionLabel));
    row.appendChild(label);
  });
  block.appendChild(row);
  return block;
}

function renderControls(
  session: AnnotationSession,
  queue: RetryQueue,
  item: PlanItem,
): HTMLElement {
  const controls = el("footer", "controls");
  const status = el("span", "status");
  const next = el("button", undefined, "Submit and continue");
  next.id = "next-button";
  next.disabled = !session.canProceed();
  next.onclick = async () => {
    next.disabled = true;
    status.textContent = "Submitting...";
    try {
      await queue.submit(session.recordsFor(item.item_id), (records) =>
        api.postRatings(records),
      );
      session.markSubmitted(item.item_id);
      renderSession(session, queue);
    } catch (err) {
      if (err instanceof DuplicateRatingError) {
        session.markSubmitted(item.item_id);
        renderSession(session, queue);
        return;
      }
      status.textContent = "Offline - answers are queued and will be retried.";
      next.disabled = false;
    }
  };
  controls.append(status, next);
  return controls;
}

function renderDone(session: AnnotationSession): void {
  const root = app();
  root.replaceChildren();
  const box = el("div", "done");
  box.appendChild(el("h1", undefined, "All items submitted - thank you!"));
  box.appendChild(
    el("p", undefined, `${session.items.length} items rated by ${session.plan.annotator}.`),
  );
  root.appendChild(box);
}

renderLogin();

// Headless session driver: walks an annotator's plan through the same
// ApiClient/AnnotationSession/RetryQueue code paths the browser uses,
// filling answers from a deterministic hash so runs are reproducible.
//
//   node dist/headless.js --base http://127.0.0.1:8000 --annotator a0

import { ApiClient, DuplicateRatingError } from "./api.js";
import { MemoryStorage, RetryQueue } from "./queue.js";
import { AnnotationSession } from "./session.js";

function argValue(flag: string): string | undefined {
  const index = process.argv.indexOf(flag);
  return index >= 0 ? process.argv[index + 1] : undefined;
}

function hashValue(text: string): number {
  let hash = 5381;
  for (let i = 0; i < text.length; i++) {
    hash = ((hash * 33) ^ text.charCodeAt(i)) >>> 0;
  }
  return hash;
}

export function deterministicAnswer(
  annotator: string,
  itemId: string,
  outputIndex: number,
  criterion: string,
): number {
  return 1 + (hashValue(`${annotator}|${itemId}|${outputIndex}|${criterion}`) % 5);
}

async function run(): Promise<void> {
  const base = argValue("--base");
  const annotator = argValue("--annotator");
  if (!base || !annotator) {
    console.error("usage: node dist/headless.js --base <url> --annotator <id>");
    process.exit(1);
  }
  const api = new ApiClient(base);
  const plan = await api.fetchPlan(annotator);
  const progress = await api.fetchProgress(annotator);
  const session = new AnnotationSession(plan, progress);
  const queue = new RetryQueue(new MemoryStorage());

  while (!session.isDone()) {
    const item = session.current!;
    for (const outputIndex of [0, 1]) {
      for (const criterion of plan.criteria) {
        session.setAnswer(
          item.item_id,
          outputIndex,
          criterion.key,
          deterministicAnswer(annotator, item.item_id, outputIndex, criterion.key),
        );
      }
    }
    if (!session.canProceed()) {
      throw new Error(`item ${item.item_id} incomplete after answering all slots`);
    }
    try {
      await queue.submit(session.recordsFor(item.item_id), (records) =>
        api.postRatings(records),
      );
    } catch (error) {
      if (!(error instanceof DuplicateRatingError)) throw error;
    }
    session.markSubmitted(item.item_id);
  }

  const final = await api.fetchProgress(annotator);
  console.log(JSON.stringify(final));
  if (!final.complete) {
    console.error("session finished but server reports incomplete progress");
    process.exit(2);
  }
}

run().catch((error) => {
  console.error(String(error));
  process.exit(1);
});

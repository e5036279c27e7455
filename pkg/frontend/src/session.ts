import type { Plan, PlanItem, Progress, RatingSubmission } from "./types.js";

function slotKey(outputIndex: number, criterion: string): string {
  return `${outputIndex}:${criterion}`;
}

/**
 * Pure annotation-session state: which item is current, which answers are
 * filled in, and when the annotator may move on. Both criteria for both
 * outputs must be answered before an item can be submitted; submitted
 * items are locked. Driven by the DOM layer in the browser and by the
 * headless runner in tests.
 */
export class AnnotationSession {
  readonly items: PlanItem[];
  private readonly answers = new Map<string, Map<string, number>>();
  private readonly submitted = new Set<string>();
  private index = 0;

  constructor(readonly plan: Plan, progress?: Progress) {
    this.items = plan.items;
    if (progress) {
      for (const status of progress.items) {
        if (status.complete) {
          this.submitted.add(status.item_id);
        }
      }
    }
    this.index = this.firstUnsubmittedIndex();
  }

  private firstUnsubmittedIndex(): number {
    const i = this.items.findIndex((item) => !this.submitted.has(item.item_id));
    return i === -1 ? this.items.length : i;
  }

  get currentIndex(): number {
    return this.index;
  }

  get current(): PlanItem | undefined {
    return this.items[this.index];
  }

  get slotsPerItem(): number {
    return 2 * this.plan.criteria.length;
  }

  isSubmitted(itemId: string): boolean {
    return this.submitted.has(itemId);
  }

  answerOf(itemId: string, outputIndex: number, criterion: string): number | undefined {
    return this.answers.get(itemId)?.get(slotKey(outputIndex, criterion));
  }

  setAnswer(itemId: string, outputIndex: number, criterion: string, value: number): void {
    if (this.submitted.has(itemId)) {
      throw new Error(`item ${itemId} is already submitted`);
    }
    if (!Number.isInteger(value) || value < 1 || value > 5) {
      throw new Error(`rating must be an integer in 1..5, got ${value}`);
    }
    if (outputIndex !== 0 && outputIndex !== 1) {
      throw new Error(`output index must be 0 or 1, got ${outputIndex}`);
    }
    if (!this.plan.criteria.some((c) => c.key === criterion)) {
      throw new Error(`unknown criterion ${criterion}`);
    }
    let slots = this.answers.get(itemId);
    if (!slots) {
      slots = new Map();
      this.answers.set(itemId, slots);
    }
    slots.set(slotKey(outputIndex, criterion), value);
  }

  isItemComplete(itemId: string): boolean {
    return (this.answers.get(itemId)?.size ?? 0) === this.slotsPerItem;
  }

  /** Next is enabled only once every slot of the current item is answered. */
  canProceed(): boolean {
    const item = this.current;
    return item !== undefined && this.isItemComplete(item.item_id);
  }

  recordsFor(itemId: string): RatingSubmission[] {
    const slots = this.answers.get(itemId);
    if (!slots || slots.size !== this.slotsPerItem) {
      throw new Error(`item ${itemId} is not fully answered`);
    }
    const records: RatingSubmission[] = [];
    for (const outputIndex of [0, 1]) {
      for (const criterion of this.plan.criteria) {
        records.push({
          annotator: this.plan.annotator,
          item_id: itemId,
          output_index: outputIndex,
          criterion: criterion.key,
          value: slots.get(slotKey(outputIndex, criterion.key))!,
        });
      }
    }
    return records;
  }

  markSubmitted(itemId: string): void {
    this.submitted.add(itemId);
    if (this.current && this.current.item_id === itemId) {
      this.index = this.firstUnsubmittedIndex();
    }
  }

  goTo(index: number): void {
    if (index < 0 || index >= this.items.length) {
      throw new Error(`item index ${index} out of range`);
    }
    this.index = index;
  }

  submittedCount(): number {
    return this.submitted.size;
  }

  isDone(): boolean {
    return this.submitted.size === this.items.length;
  }

  progressFraction(): number {
    return this.items.length === 0 ? 1 : this.submitted.size / this.items.length;
  }
}

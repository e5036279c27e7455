import { DuplicateRatingError } from "./api.js";
import type { RatingSubmission } from "./types.js";

export interface QueueStorage {
  load(): RatingSubmission[];
  save(records: RatingSubmission[]): void;
}

export class MemoryStorage implements QueueStorage {
  private records: RatingSubmission[] = [];
  load(): RatingSubmission[] {
    return [...this.records];
  }
  save(records: RatingSubmission[]): void {
    this.records = [...records];
  }
}

export class LocalStorageAdapter implements QueueStorage {
  constructor(private readonly key: string) {}
  load(): RatingSubmission[] {
    const raw = window.localStorage.getItem(this.key);
    return raw ? (JSON.parse(raw) as RatingSubmission[]) : [];
  }
  save(records: RatingSubmission[]): void {
    window.localStorage.setItem(this.key, JSON.stringify(records));
  }
}

/**
 * Holds submissions that failed on a network error so they are never lost:
 * they persist via the storage adapter and are retried before anything new
 * is sent. A 409 means the server already has the records, so they leave
 * the queue.
 */
export class RetryQueue {
  private pending: RatingSubmission[];

  constructor(private readonly storage: QueueStorage) {
    this.pending = storage.load();
  }

  get size(): number {
    return this.pending.length;
  }

  async submit(
    records: RatingSubmission[],
    post: (records: RatingSubmission[]) => Promise<void>,
  ): Promise<void> {
    this.pending.push(...records);
    this.storage.save(this.pending);
    await this.flush(post);
  }

  /** Retries everything queued; stops (keeping the rest) on the first network failure. */
  async flush(post: (records: RatingSubmission[]) => Promise<void>): Promise<void> {
    while (this.pending.length > 0) {
      const batch = this.pending[0]!;
      try {
        await post([batch]);
      } catch (error) {
        if (!(error instanceof DuplicateRatingError)) {
          throw error; // stays queued for the next flush
        }
      }
      this.pending.shift();
      this.storage.save(this.pending);
    }
  }
}

import type { Plan, Progress, RatingSubmission } from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

/** The server already has these ratings; treat as recorded, not as failure. */
export class DuplicateRatingError extends ApiError {
  constructor(message: string) {
    super(409, message);
  }
}

export class ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  private async getJson<T>(path: string): Promise<T> {
    const response = await fetch(this.baseUrl + path);
    if (!response.ok) {
      throw new ApiError(response.status, `GET ${path} failed: ${response.status}`);
    }
    return (await response.json()) as T;
  }

  fetchPlan(annotator: string): Promise<Plan> {
    return this.getJson<Plan>(`/api/plan/${encodeURIComponent(annotator)}`);
  }

  fetchProgress(annotator: string): Promise<Progress> {
    return this.getJson<Progress>(`/api/progress/${encodeURIComponent(annotator)}`);
  }

  async postRatings(records: RatingSubmission[]): Promise<void> {
    const response = await fetch(this.baseUrl + "/api/ratings", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(records),
    });
    if (response.status === 409) {
      throw new DuplicateRatingError(await response.text());
    }
    if (!response.ok) {
      throw new ApiError(response.status, `POST /api/ratings failed: ${response.status}`);
    }
  }
}

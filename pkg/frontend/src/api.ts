import type {
  BallotResult,
  ContestSummary,
  ManifestEntry,
  SessionCreated,
  SessionParams,
  StateResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

type FetchLike = typeof fetch;

/** Typed client for the audit service's JSON API. */
export class AuditApi {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  listContests(): Promise<ContestSummary[]> {
    return this.request("/contests");
  }

  getContest(contestId: string): Promise<ContestSummary> {
    return this.request(`/contests/${encodeURIComponent(contestId)}`);
  }

  async getManifest(contestId: string): Promise<Map<string, string>> {
    const body = await this.request<{ ballots: ManifestEntry[] }>(
      `/contests/${encodeURIComponent(contestId)}/manifest`,
    );
    return new Map(body.ballots.map((b) => [b.ballot_id, b.vote]));
  }

  createSession(contestId: string, params: SessionParams = {}): Promise<SessionCreated> {
    return this.request("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ contest_id: contestId, ...params }),
    });
  }

  postBallot(
    sessionId: string,
    ballotId: string,
    vote: string,
    revision?: number,
  ): Promise<BallotResult> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}/ballots`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ ballot_id: ballotId, vote, revision }),
    });
  }

  getState(
    sessionId: string,
    sinceRevision = 0,
    timeoutSeconds = 0,
  ): Promise<StateResponse> {
    const params = new URLSearchParams({
      since_revision: String(sinceRevision),
      timeout: String(timeoutSeconds),
    });
    return this.request(
      `/sessions/${encodeURIComponent(sessionId)}/state?${params}`,
    );
  }

  async exportCsv(sessionId: string): Promise<string> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/sessions/${encodeURIComponent(sessionId)}/export.csv`,
    );
    if (!response.ok) throw new ApiError(response.status, response.statusText);
    return response.text();
  }
}

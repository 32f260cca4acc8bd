import type { AuditApi } from "./api.js";
import type { SessionParams } from "./types.js";
import { applyState, emptyState, type DashboardState } from "./state.js";

export interface FeederOutcome {
  state: DashboardState;
  certifiedAt: number | null;
  posted: number;
}

/**
 * Replay a ground-truth manifest against a live session: post the vote for
 * whichever ballot the server draws, pull the state delta, repeat until the
 * audit certifies or the population is exhausted.  This is a simulation of
 * an auditor typing in votes; it exercises exactly the endpoints a human
 * session uses.
 */
export class DemoFeeder {
  stopped = false;

  constructor(
    private api: AuditApi,
    private votes: Map<string, string>,
    private onUpdate?: (state: DashboardState) => void,
    private delayMs = 0,
  ) {}

  stop(): void {
    this.stopped = true;
  }

  async run(contestId: string, params: SessionParams = {}): Promise<FeederOutcome> {
    const created = await this.api.createSession(contestId, params);
    let state = applyState(
      emptyState(),
      await this.api.getState(created.session_id, 0),
    );
    this.onUpdate?.(state);
    let ballot: string | null = created.first_ballot;
    let posted = 0;
    while (ballot !== null && !this.stopped) {
      const vote = this.votes.get(ballot);
      if (vote === undefined) {
        throw new Error(`manifest has no vote for ballot ${ballot}`);
      }
      const result = await this.api.postBallot(created.session_id, ballot, vote);
      posted += 1;
      const delta = await this.api.getState(created.session_id, state.revision);
      state = applyState(state, delta);
      this.onUpdate?.(state);
      if (result.overall_status === "certified") {
        return { state, certifiedAt: result.certified_at, posted };
      }
      ballot = result.next_ballot;
      if (this.delayMs > 0) {
        await new Promise((resolve) => setTimeout(resolve, this.delayMs));
      }
    }
    return { state, certifiedAt: state.certifiedAt, posted };
  }
}

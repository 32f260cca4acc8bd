import type { AssertionState, StateResponse, TrajectoryRow } from "./types.js";

/** Everything the dashboard renders; populated only from service responses. */
export interface DashboardState {
  sessionId: string | null;
  revision: number;
  overallStatus: string;
  certifiedAt: number | null;
  pendingBallot: string | null;
  exhausted: boolean;
  mode: string;
  alpha: number;
  strategy: string;
  assertions: AssertionState[];
  /** Per-assertion rows ordered by t; strictly increasing within each series. */
  trajectories: Map<string, TrajectoryRow[]>;
}

export function emptyState(): DashboardState {
  return {
    sessionId: null,
    revision: -1,
    overallStatus: "open",
    certifiedAt: null,
    pendingBallot: null,
    exhausted: false,
    mode: "rla",
    alpha: 0.05,
    strategy: "sqkelly",
    assertions: [],
    trajectories: new Map(),
  };
}

/**
 * Merge a state response.  Responses carrying a lower revision than what is
 * already rendered are ignored, so the chart never moves backwards; rows
 * already known (t at or below the last charted t) are skipped.
 */
export function applyState(state: DashboardState, resp: StateResponse): DashboardState {
  if (state.sessionId !== null && resp.session_id !== state.sessionId) {
    return state;
  }
  if (resp.revision < state.revision) {
    return state;
  }
  const trajectories = new Map(state.trajectories);
  for (const row of resp.rows) {
    const series = trajectories.get(row.assertion) ?? [];
    const last = series.length ? series[series.length - 1].t : -1;
    if (row.t > last) {
      trajectories.set(row.assertion, [...series, row]);
    }
  }
  return {
    sessionId: resp.session_id,
    revision: resp.revision,
    overallStatus: resp.overall_status,
    certifiedAt: resp.certified_at,
    pendingBallot: resp.pending_ballot,
    exhausted: resp.exhausted,
    mode: resp.mode,
    alpha: resp.alpha,
    strategy: resp.strategy,
    assertions: resp.assertions,
    trajectories,
  };
}

/** Flatten the charted series back to (t, assertion)-ordered rows. */
export function allRows(state: DashboardState): TrajectoryRow[] {
  const labels = state.assertions.length
    ? state.assertions.map((a) => a.assertion)
    : [...state.trajectories.keys()];
  const maxT = Math.max(
    0,
    ...[...state.trajectories.values()].map((s) =>
      s.length ? s[s.length - 1].t : 0,
    ),
  );
  const rows: TrajectoryRow[] = [];
  for (let t = 0; t <= maxT; t++) {
    for (const label of labels) {
      const series = state.trajectories.get(label) ?? [];
      const row = series.find((r) => r.t === t);
      if (row) rows.push(row);
    }
  }
  return rows;
}

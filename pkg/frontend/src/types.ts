// Payload shapes served by the audit service; the dashboard never derives
// statistics itself, it only renders what these carry.

export interface ContestSummary {
  contest_id: string;
  district: string;
  total_ballots: number;
  candidates: Record<string, number>;
  parties: Record<string, string>;
  invalid: number;
}

export type AssertionStatus = "open" | "certified" | "exhausted";

export interface AssertionState {
  assertion: string;
  winner: string;
  loser: string;
  status: AssertionStatus;
  stopped_at: number | null;
  level: number;
  lower: number | null;
  upper: number | null;
}

export interface TrajectoryRow {
  t: number;
  assertion: string;
  lower: number;
  upper?: number;
  p_value: number;
}

export interface SessionCreated {
  session_id: string;
  contest_id: string;
  first_ballot: string;
  revision: number;
  assertions: AssertionState[];
}

export interface BallotResult {
  revision: number;
  recorded: { ballot_id: string; vote: string };
  overall_status: string;
  certified_at: number | null;
  next_ballot: string | null;
  exhausted: boolean;
  assertions: AssertionState[];
}

export interface StateResponse {
  session_id: string;
  revision: number;
  overall_status: string;
  certified_at: number | null;
  pending_ballot: string | null;
  exhausted: boolean;
  mode: string;
  alpha: number;
  strategy: string;
  assertions: AssertionState[];
  rows: TrajectoryRow[];
}

export interface ManifestEntry {
  ballot_id: string;
  vote: string;
}

export interface SessionParams {
  alpha?: number;
  strategy?: string;
  mode?: string;
  seed?: number;
  num_winners?: number;
}

"""Command-line interface: audits, simulations, exports, and the service."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from auditseq import dataio
from auditseq.engine import (
    STRATEGY_NAMES,
    AuditError,
    AuditSession,
    InvalidVoteError,
    create_session,
    draw_next,
    record_ballot,
    restore_session,
    session_status,
    snapshot_session,
)
from auditseq.simulator import comparison_csv, load_scenario, simulate_workload


def _validate_alpha(ctx, param, value):
    if value is not None and not (0.0 < value < 1.0):
        raise click.BadParameter("alpha must lie strictly between 0 and 1")
    return value


def _parse_nulls(ctx, param, value):
    if not value:
        return []
    try:
        return [float(tok) for tok in value.split(",")]
    except ValueError:
        raise click.BadParameter("nulls must be a comma-separated list of numbers")


@click.group()
def main():
    """Risk-limiting audits via betting martingales and confidence sequences."""


@main.command("contests")
@click.option("--data", "data_path", type=click.Path(exists=True), default=None,
              help="Contest CSV (defaults to the bundled sample dataset).")
def contests_cmd(data_path):
    """List the contests in a data file with their reported totals."""
    path = Path(data_path) if data_path else dataio.sample_contests_path()
    for contest in dataio.load_contests(path):
        click.echo(f"{contest.contest_id} ({contest.district}, N={contest.total_ballots})")
        for cand, votes in contest.candidates.items():
            click.echo(f"  {cand:<16} {votes:>8}")
        if contest.invalid:
            click.echo(f"  {'(invalid)':<16} {contest.invalid:>8}")


def _status_line(session: AuditSession) -> str:
    report = session_status(session)
    parts = []
    for rep in report.assertions:
        bound = f"{rep.lower:.4f}"
        if rep.upper is not None:
            bound += f"..{rep.upper:.4f}"
        marker = "*" if rep.status == "certified" else ""
        parts.append(f"{rep.assertion}={bound}{marker}")
    return " ".join(parts)


def _write_outputs(session: AuditSession, out_dir: Path, nulls) -> tuple[Path, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    snap_path = out_dir / "snapshot.json"
    traj_path = out_dir / "trajectory.csv"
    snap_path.write_text(snapshot_session(session))
    traj_path.write_text(dataio.export_trajectories(session, nulls=nulls))
    return snap_path, traj_path


@main.command("audit")
@click.argument("contest_id", required=False)
@click.option("--data", "data_path", type=click.Path(exists=True), default=None)
@click.option("--alpha", type=float, default=0.05, callback=_validate_alpha,
              help="Risk limit in (0, 1).")
@click.option("--strategy", type=click.Choice(STRATEGY_NAMES), default="sqkelly")
@click.option("--mode", type=click.Choice(["rla", "rlt"]), default="rla")
@click.option("--seed", type=int, default=0)
@click.option("--num-winners", type=int, default=1)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), default=None,
              help="Ballot manifest with a vote column: replays without prompting.")
@click.option("--resume", "resume_path", type=click.Path(exists=True), default=None,
              help="Resume from a session snapshot.")
@click.option("--out", "out_dir", type=click.Path(), default="audit_out")
@click.option("--nulls", callback=_parse_nulls, default="",
              help="Extra null means for p-value columns, e.g. 0.45,0.48,0.5.")
@click.option("--run-to-exhaustion", is_flag=True, default=False,
              help="Keep sampling after overall certification (manifest mode).")
def audit_cmd(contest_id, data_path, alpha, strategy, mode, seed, num_winners,
              manifest_path, resume_path, out_dir, nulls, run_to_exhaustion):
    """Run an audit session, interactively or by replaying a manifest.

    Interactive mode prompts for the vote on each server-drawn ballot id.
    On exit a resumable snapshot and the confidence-sequence trajectory are
    written to the output directory.
    """
    out_dir = Path(out_dir)
    manifest = dataio.load_manifest(manifest_path) if manifest_path else None

    if resume_path:
        session = restore_session(Path(resume_path).read_text())
        click.echo(f"resumed session at t={session.revision}")
    else:
        if not contest_id:
            raise click.UsageError("provide a CONTEST_ID or --resume")
        path = Path(data_path) if data_path else dataio.sample_contests_path()
        by_id = {c.contest_id: c for c in dataio.load_contests(path)}
        if contest_id not in by_id:
            raise click.UsageError(
                f"unknown contest {contest_id!r}; available: {', '.join(sorted(by_id))}"
            )
        contest = by_id[contest_id]
        try:
            session = create_session(
                contest.result(), alpha=alpha, strategy=strategy, mode=mode,
                seed=seed, num_winners=num_winners,
                manifest=manifest.ballot_ids if manifest else None,
            )
        except (ValueError, AuditError) as exc:
            raise click.UsageError(str(exc))

    votes = manifest.votes if manifest and manifest.votes else None
    if manifest and votes is None:
        raise click.UsageError("manifest mode needs a vote column; omit --manifest to prompt")

    interrupted = False
    try:
        while session.revision < session.total:
            report = session_status(session, with_bounds=False)
            if report.overall_status == "certified" and not run_to_exhaustion:
                if votes is not None:
                    break
                if not click.confirm("overall certified; continue sampling anyway?",
                                     default=False):
                    break
            ballot = session.pending_ballot or draw_next(session)
            if votes is not None:
                vote = votes.get(ballot)
                if vote is None:
                    raise click.ClickException(f"manifest has no vote for ballot {ballot!r}")
                record_ballot(session, ballot, vote)
            else:
                while True:
                    vote = click.prompt(
                        f"t={session.revision + 1} ballot {ballot}: vote "
                        f"({'/'.join(session.vote_tokens)})"
                    ).strip()
                    try:
                        record_ballot(session, ballot, vote)
                        break
                    except InvalidVoteError as exc:
                        click.echo(f"  {exc}; valid: {', '.join(exc.valid_tokens)}")
            click.echo(f"t={session.revision} ballot={ballot} vote={vote} | {_status_line(session)}")
            report = session_status(session, with_bounds=False)
            for rep in report.assertions:
                if rep.stopped_at == session.revision:
                    click.echo(f"CERTIFIED {rep.assertion} at t={rep.stopped_at}")
            if report.overall_status == "certified" and report.certified_at == session.revision:
                click.echo(f"AUDIT COMPLETE: all assertions certified at t={report.certified_at}")
    except (KeyboardInterrupt, click.exceptions.Abort, EOFError):
        interrupted = True

    report = session_status(session, with_bounds=False)
    snap_path, traj_path = _write_outputs(session, out_dir, nulls)
    if interrupted:
        click.echo(f"\ninterrupted; resume with --resume {snap_path}")
    click.echo(f"status: {report.overall_status}"
               + (f" (certified_at={report.certified_at})" if report.certified_at else ""))
    click.echo(f"snapshot: {snap_path}")
    click.echo(f"trajectory: {traj_path}")
    if report.overall_status == "exhausted":
        sys.exit(3)


@main.command("simulate")
@click.argument("scenario_path", type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), default="sim_out")
def simulate_cmd(scenario_path, out_dir):
    """Run a workload simulation from a scenario JSON file."""
    try:
        scenario = load_scenario(scenario_path)
        report = simulate_workload(scenario)
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"invalid scenario: {exc}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    (out / "report.csv").write_text(report.to_csv())
    click.echo(report.to_csv().rstrip("\n"))
    click.echo(f"written: {out / 'report.json'}, {out / 'report.csv'}")


@main.command("compare")
@click.argument("scenario_paths", type=click.Path(exists=True), nargs=-1, required=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def compare_cmd(scenario_paths, out_path):
    """Tabulate mean/median workloads across several scenario files."""
    from auditseq.simulator import compare_methods

    scenarios = [load_scenario(p) for p in scenario_paths]
    rows = compare_methods(scenarios)
    text = comparison_csv(rows)
    click.echo(text.rstrip("\n"))
    if out_path:
        Path(out_path).write_text(text)


@main.command("export")
@click.argument("snapshot_path", type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default="trajectory.csv")
@click.option("--nulls", callback=_parse_nulls, default="")
def export_cmd(snapshot_path, out_path, nulls):
    """Export the confidence-sequence trajectory of a stored session."""
    session = restore_session(Path(snapshot_path).read_text())
    Path(out_path).write_text(dataio.export_trajectories(session, nulls=nulls))
    click.echo(f"written: {out_path}")


@main.command("serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8400)
@click.option("--data", "data_path", type=click.Path(exists=True), default=None)
@click.option("--sessions-dir", type=click.Path(), default=None,
              help="Directory for durable session snapshots.")
@click.option("--ui-dir", type=click.Path(), default=None,
              help="Built dashboard directory to mount at /ui.")
def serve_cmd(host, port, data_path, sessions_dir, ui_dir):
    """Serve the JSON API (and the dashboard, if built) over HTTP."""
    import uvicorn

    from auditseq.service import create_app

    app = create_app(data_path=data_path, sessions_dir=sessions_dir, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()

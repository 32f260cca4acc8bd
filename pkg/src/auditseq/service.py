"""JSON-over-HTTP facade over the audit engine.

The server owns the draw sequence: every response names the next ballot id
to retrieve physically, and posting a vote for anything but the pending
ballot is rejected with 409.  That keeps the without-replacement uniform
draw contract on the server rather than trusting clients.

Sessions are serialized per session id; accepted ballots bump a revision
counter, and ``GET .../state?since_revision=r`` returns the trajectory rows
added after revision ``r`` (long-polling up to a timeout when there is
nothing new yet).  When a sessions directory is configured, every accepted
ballot also writes a durable snapshot so a crashed audit resumes exactly.
"""

from __future__ import annotations

import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from auditseq import dataio
from auditseq.engine import (
    AuditError,
    AuditSession,
    InvalidVoteError,
    UnknownBallotError,
    WrongBallotError,
    create_session,
    draw_next,
    record_ballot,
    restore_session,
    session_status,
    snapshot_session,
)

__all__ = ["create_app"]

LONG_POLL_CAP = 30.0


class SessionCreateRequest(BaseModel):
    contest_id: str
    alpha: float = 0.05
    strategy: str = "sqkelly"
    mode: str = "rla"
    seed: int = 0
    num_winners: int = 1


class BallotRequest(BaseModel):
    ballot_id: str
    vote: str
    revision: int | None = None


class SessionResource:
    """One audit session plus its lock, revision condition and row cache."""

    def __init__(self, session_id: str, session: AuditSession):
        self.id = session_id
        self.session = session
        self.lock = threading.Lock()
        self.changed = threading.Condition(self.lock)
        self.rows: list[dict] = dataio.trajectory_rows(session)

    def assertion_payload(self) -> list[dict]:
        report = session_status(self.session)
        return [
            {
                "assertion": rep.assertion,
                "winner": rep.winner,
                "loser": rep.loser,
                "status": rep.status,
                "stopped_at": rep.stopped_at,
                "level": rep.level,
                "lower": rep.lower,
                "upper": rep.upper,
            }
            for rep in report.assertions
        ]

    def state_payload(self, since_revision: int) -> dict:
        session = self.session
        report = session_status(session)
        if since_revision == 0:
            rows = list(self.rows)
        else:
            rows = [r for r in self.rows if r["t"] > since_revision]
        return {
            "session_id": self.id,
            "revision": session.revision,
            "overall_status": report.overall_status,
            "certified_at": report.certified_at,
            "pending_ballot": session.pending_ballot,
            "exhausted": session.revision >= session.total,
            "mode": session.mode,
            "alpha": session.alpha,
            "strategy": session.strategy_name,
            "assertions": self.assertion_payload(),
            "rows": rows,
        }


def create_app(
    data_path: str | None = None,
    sessions_dir: str | None = None,
    ui_dir: str | None = None,
) -> FastAPI:
    """Build the service; contests load from ``data_path`` or the bundled sample."""
    app = FastAPI(title="auditseq service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    contests: dict[str, dataio.ContestFile] = {}
    path = Path(data_path) if data_path else dataio.sample_contests_path()
    for contest in dataio.load_contests(path):
        contests[contest.contest_id] = contest

    sessions: dict[str, SessionResource] = {}
    store = Path(sessions_dir) if sessions_dir else None
    if store:
        store.mkdir(parents=True, exist_ok=True)
        for snap in sorted(store.glob("*.json")):
            try:
                resource = SessionResource(snap.stem, restore_session(snap.read_text()))
                sessions[snap.stem] = resource
            except AuditError:
                continue

    def persist(resource: SessionResource) -> None:
        if store:
            (store / f"{resource.id}.json").write_text(snapshot_session(resource.session))

    def contest_payload(contest: dataio.ContestFile) -> dict:
        return {
            "contest_id": contest.contest_id,
            "district": contest.district,
            "total_ballots": contest.total_ballots,
            "candidates": dict(contest.candidates),
            "parties": dict(contest.parties),
            "invalid": contest.invalid,
        }

    def get_resource(session_id: str) -> SessionResource:
        resource = sessions.get(session_id)
        if resource is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return resource

    @app.get("/contests")
    def list_contests():
        return [contest_payload(c) for c in contests.values()]

    @app.get("/contests/{contest_id}")
    def get_contest(contest_id: str):
        if contest_id not in contests:
            raise HTTPException(status_code=404, detail=f"unknown contest {contest_id!r}")
        return contest_payload(contests[contest_id])

    @app.post("/contests", status_code=201)
    async def ingest_contests(request: Request):
        text = (await request.body()).decode("utf-8", errors="replace")
        try:
            parsed = dataio.parse_contests(text, source="<upload>")
        except dataio.ContestValidationError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        if not parsed:
            raise HTTPException(status_code=400, detail="no contests in upload")
        for contest in parsed:
            contests[contest.contest_id] = contest
        return {"ingested": [c.contest_id for c in parsed]}

    @app.get("/contests/{contest_id}/manifest")
    def get_manifest(contest_id: str):
        if contest_id not in contests:
            raise HTTPException(status_code=404, detail=f"unknown contest {contest_id!r}")
        manifest = dataio.demo_manifest(contests[contest_id])
        return {
            "contest_id": contest_id,
            "ballots": [
                {"ballot_id": bid, "vote": manifest.votes[bid]}
                for bid in manifest.ballot_ids
            ],
        }

    @app.post("/sessions", status_code=201)
    def create_session_endpoint(body: SessionCreateRequest):
        if body.contest_id not in contests:
            raise HTTPException(status_code=404, detail=f"unknown contest {body.contest_id!r}")
        contest = contests[body.contest_id]
        manifest = dataio.demo_manifest(contest)
        try:
            session = create_session(
                contest.result(),
                alpha=body.alpha,
                strategy=body.strategy,
                mode=body.mode,
                seed=body.seed,
                num_winners=body.num_winners,
                manifest=manifest.ballot_ids,
            )
        except (ValueError, AuditError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        session_id = uuid.uuid4().hex[:12]
        resource = SessionResource(session_id, session)
        first = draw_next(session)
        sessions[session_id] = resource
        persist(resource)
        return {
            "session_id": session_id,
            "contest_id": body.contest_id,
            "first_ballot": first,
            "revision": 0,
            "assertions": resource.assertion_payload(),
        }

    @app.post("/sessions/{session_id}/ballots")
    def post_ballot(session_id: str, body: BallotRequest):
        resource = get_resource(session_id)
        with resource.lock:
            session = resource.session
            if body.revision is not None and body.revision != session.revision:
                raise HTTPException(
                    status_code=409,
                    detail=f"revision {body.revision} does not match {session.revision}",
                )
            try:
                record_ballot(session, body.ballot_id, body.vote)
            except WrongBallotError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            except UnknownBallotError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            except InvalidVoteError as exc:
                raise HTTPException(
                    status_code=400,
                    detail=f"{exc}; valid votes: {', '.join(exc.valid_tokens)}",
                )
            # append this revision's trajectory rows using the live bounds;
            # p-values replay the stored prefix, matching the CSV export
            t = session.revision
            report = session_status(session)
            by_label = {aa.label: aa for aa in session.assertions}
            for rep in report.assertions:
                aa = by_label[rep.assertion]
                row = {"t": t, "assertion": rep.assertion, "lower": rep.lower}
                if session.mode == "rlt":
                    row["upper"] = rep.upper
                row["p_value"] = aa.conf.p_value(aa.assertion.threshold)
                resource.rows.append(row)
            next_ballot = None
            if session.revision < session.total:
                next_ballot = session.pending_ballot or draw_next(session)
            persist(resource)
            resource.changed.notify_all()
            return {
                "revision": session.revision,
                "recorded": {"ballot_id": body.ballot_id, "vote": body.vote},
                "overall_status": report.overall_status,
                "certified_at": report.certified_at,
                "next_ballot": next_ballot,
                "exhausted": session.revision >= session.total,
                "assertions": resource.assertion_payload(),
            }

    @app.get("/sessions/{session_id}/state")
    def get_state(
        session_id: str,
        since_revision: int = Query(default=0, ge=0),
        timeout: float = Query(default=0.0, ge=0.0, le=LONG_POLL_CAP),
    ):
        resource = get_resource(session_id)
        with resource.lock:
            if timeout > 0 and resource.session.revision <= since_revision:
                resource.changed.wait(timeout=timeout)
            return resource.state_payload(since_revision)

    @app.get("/sessions/{session_id}/export.csv", response_class=PlainTextResponse)
    def export_csv(session_id: str):
        resource = get_resource(session_id)
        with resource.lock:
            return dataio.export_trajectories(resource.session)

    @app.get("/sessions")
    def list_sessions():
        return [
            {
                "session_id": r.id,
                "revision": r.session.revision,
                "strategy": r.session.strategy_name,
                "mode": r.session.mode,
            }
            for r in sessions.values()
        ]

    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app

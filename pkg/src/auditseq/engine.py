"""Stateful audit sessions: seeded sampling, certification, snapshots.

A session owns the without-replacement sampling log for one contest and a
wealth process per pairwise assertion (every reported winner against every
reported loser).  Ballots are drawn uniformly from the remaining ids with a
counter-based Philox generator so audits replay identically from a seed.

Certification tests the assertion's threshold directly: an assertion is
certified once the running maximum of its one-sided wealth at the threshold
reaches ``1/level``, which by monotonicity of the wealth in the candidate
mean is exactly the event "the confidence sequence excludes everything at
or below the threshold".  In tally (RLT) mode each assertion runs at level
``alpha / K`` (Bonferroni) and the certification statistic is the plus side
of the two-sided mixture weighted by its mixture mass, a conservative lower
bound on the mixture wealth below the threshold.

Sessions in RLA mode test every assertion at level ``alpha`` with no
multiplicity adjustment: the audit stops only when all assertions certify,
and a single false assertion alone bounds the overall error.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from auditseq.confseq import ConfidenceConfig, ConfidenceState, IntervalResult
from auditseq.martingale import (
    BettingStrategy,
    ConvexGrid,
    FixedLambda,
    MartingaleState,
    TwoSided,
    apriori_kelly_lambda,
    init_state,
    make_weights,
    update_martingale,
)
from auditseq.population import Assertion, ContestResult

__all__ = [
    "SNAPSHOT_VERSION",
    "STRATEGY_NAMES",
    "AuditError",
    "AuditSession",
    "AssertionAudit",
    "AssertionReport",
    "CertificationReport",
    "ExhaustedError",
    "InvalidVoteError",
    "SnapshotError",
    "UnknownBallotError",
    "WrongBallotError",
    "create_session",
    "draw_next",
    "encode_vote",
    "record_ballot",
    "restore_session",
    "session_status",
    "snapshot_session",
]

SNAPSHOT_VERSION = 1
STRATEGY_NAMES = ("apk", "dkelly", "sqkelly", "linkelly")
INVALID_TOKEN = "invalid"


class AuditError(Exception):
    """Base class for audit session errors."""


class ExhaustedError(AuditError):
    pass


class UnknownBallotError(AuditError):
    pass


class WrongBallotError(AuditError):
    def __init__(self, message: str, pending: str | None = None):
        super().__init__(message)
        self.pending = pending


class InvalidVoteError(AuditError):
    def __init__(self, message: str, valid_tokens: list[str]):
        super().__init__(message)
        self.valid_tokens = valid_tokens


class SnapshotError(AuditError):
    pass


def encode_vote(vote: str, assertion: Assertion) -> float:
    """Pairwise encoding: winner 1, loser 0, anything else (incl. invalid) 1/2."""
    if vote == assertion.winner:
        return 1.0
    if vote == assertion.loser:
        return 0.0
    return 0.5


@dataclass
class AssertionAudit:
    assertion: Assertion
    level: float
    strategy: BettingStrategy
    cert_state: MartingaleState
    cert_offset: float
    conf: ConfidenceState
    log_max: float = 0.0
    status: str = "open"
    stopped_at: int | None = None

    @property
    def label(self) -> str:
        return self.assertion.label


@dataclass(frozen=True)
class AssertionReport:
    assertion: str
    winner: str
    loser: str
    status: str
    stopped_at: int | None
    level: float
    lower: float | None = None
    upper: float | None = None


@dataclass(frozen=True)
class CertificationReport:
    assertions: list[AssertionReport]
    overall_status: str
    certified_at: int | None
    ballots_recorded: int


@dataclass
class AuditSession:
    contest: ContestResult
    num_winners: int
    alpha: float
    mode: str
    strategy_name: str
    seed: int
    grid_size: int
    beta: float
    manifest: list[str]
    explicit_manifest: bool
    rng: np.random.Generator
    assertions: list[AssertionAudit]
    drawn: list[str] = field(default_factory=list)
    votes: list[str] = field(default_factory=list)
    _remaining: list[str] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.contest.total_ballots

    @property
    def revision(self) -> int:
        return len(self.votes)

    @property
    def pending_ballot(self) -> str | None:
        if len(self.votes) < len(self.drawn):
            return self.drawn[len(self.votes)]
        return None

    @property
    def vote_tokens(self) -> list[str]:
        return list(self.contest.counts) + [INVALID_TOKEN]

    def manifest_ids(self) -> set[str]:
        if not hasattr(self, "_manifest_set_cache"):
            self._manifest_set_cache = set(self.manifest)
        return self._manifest_set_cache

    def recorded_ids(self) -> set[str]:
        return set(self.drawn[: len(self.votes)])


def _winners_losers(contest: ContestResult, num_winners: int) -> tuple[list[str], list[str]]:
    ranked = sorted(contest.counts, key=lambda name: (-contest.counts[name], name))
    return ranked[:num_winners], ranked[num_winners:]


def _build_strategy(
    name: str,
    mode: str,
    contest: ContestResult,
    winner: str,
    loser: str,
    grid_size: int,
    beta: float,
) -> BettingStrategy:
    if name not in STRATEGY_NAMES:
        raise ValueError(f"unknown strategy {name!r}; choose from {', '.join(STRATEGY_NAMES)}")
    if mode == "rlt":
        if name == "apk":
            raise ValueError("apk depends on the reported outcome and cannot drive a tally")
        kind = {"dkelly": "constant", "sqkelly": "square", "linkelly": "linear"}[name]
        weights = make_weights(kind, grid_size)
        return TwoSided(plus=weights, minus=weights, beta=beta)
    if name == "apk":
        return FixedLambda(apriori_kelly_lambda(contest, winner, loser))
    kind = {"dkelly": "constant", "sqkelly": "square", "linkelly": "linear"}[name]
    return ConvexGrid(make_weights(kind, grid_size))


def create_session(
    contest: ContestResult,
    alpha: float,
    strategy: str,
    mode: str = "rla",
    seed: int = 0,
    num_winners: int = 1,
    manifest: list[str] | None = None,
    grid_size: int = 100,
    beta: float = 0.5,
) -> AuditSession:
    """Initialize an audit of ``contest`` with one martingale per assertion.

    RLA mode tests each winner/loser pair at level ``alpha``; RLT mode
    applies a Bonferroni correction, testing each pair at ``alpha / K``.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    if mode not in ("rla", "rlt"):
        raise ValueError("mode must be 'rla' or 'rlt'")
    if not (1 <= num_winners < len(contest.counts)):
        raise ValueError("num_winners must leave at least one loser")
    N = contest.total_ballots
    if manifest is not None:
        if len(manifest) != N:
            raise ValueError("manifest length must equal total ballots")
        if len(set(manifest)) != N:
            raise ValueError("manifest ids must be unique")
        ids = list(manifest)
        explicit = True
    else:
        ids = [str(i) for i in range(1, N + 1)]
        explicit = False

    winners, losers = _winners_losers(contest, num_winners)
    pairs = [(w, l) for w in winners for l in losers]
    level = alpha if mode == "rla" else alpha / len(pairs)

    audits = []
    for w, l in pairs:
        strat = _build_strategy(strategy, mode, contest, w, l, grid_size, beta)
        if isinstance(strat, TwoSided):
            cert_state = init_state(ConvexGrid(strat.plus), N)
            cert_offset = math.log(strat.beta) if strat.beta < 1.0 else 0.0
            side = "two_sided"
        else:
            cert_state = init_state(strat, N)
            cert_offset = 0.0
            side = "lower"
        conf = ConfidenceState(strat, N, ConfidenceConfig(alpha=level, side=side))
        audits.append(
            AssertionAudit(
                assertion=Assertion(winner=w, loser=l),
                level=level,
                strategy=strat,
                cert_state=cert_state,
                cert_offset=cert_offset,
                conf=conf,
            )
        )

    rng = np.random.Generator(np.random.Philox(seed))
    return AuditSession(
        contest=contest,
        num_winners=num_winners,
        alpha=alpha,
        mode=mode,
        strategy_name=strategy,
        seed=seed,
        grid_size=grid_size,
        beta=beta,
        manifest=ids,
        explicit_manifest=explicit,
        rng=rng,
        assertions=audits,
        _remaining=list(ids),
    )


def draw_next(session: AuditSession) -> str:
    """Draw one ballot id uniformly from the remaining ids."""
    if not session._remaining:
        raise ExhaustedError("all ballots have been drawn")
    idx = int(session.rng.integers(0, len(session._remaining)))
    ballot = session._remaining.pop(idx)
    session.drawn.append(ballot)
    return ballot


def record_ballot(session: AuditSession, ballot_id: str, vote: str) -> CertificationReport:
    """Record the vote on a drawn ballot and update every assertion.

    Ballots must be recorded in draw order; the martingale guarantee rests
    on updates seeing the uniform draw sequence.  Returns a lightweight
    report (statuses without confidence bounds; use ``session_status`` for
    bounds).
    """
    pending = session.pending_ballot
    if pending is None:
        raise WrongBallotError("no drawn ballot is awaiting a vote", pending=None)
    if ballot_id != pending:
        if ballot_id in session.recorded_ids():
            raise WrongBallotError(
                f"ballot {ballot_id!r} was already recorded; pending ballot is {pending!r}",
                pending=pending,
            )
        if ballot_id not in session.manifest_ids():
            raise UnknownBallotError(
                f"ballot {ballot_id!r} is not in the manifest; "
                f"the pending ballot is {pending!r}"
            )
        raise WrongBallotError(
            f"wrong ballot {ballot_id!r}; the pending ballot is {pending!r}",
            pending=pending,
        )
    if vote not in session.contest.counts and vote != INVALID_TOKEN:
        raise InvalidVoteError(
            f"unknown vote {vote!r}", valid_tokens=session.vote_tokens
        )

    t = len(session.votes) + 1
    for aa in session.assertions:
        x = encode_vote(vote, aa.assertion)
        aa.cert_state, _ = update_martingale(aa.cert_state, x, aa.assertion.threshold)
        statistic = aa.cert_offset + aa.cert_state.log_wealth()
        if statistic > aa.log_max:
            aa.log_max = statistic
        aa.conf.append(x)
        if aa.status == "open" and aa.log_max >= -math.log(aa.level):
            aa.status = "certified"
            aa.stopped_at = t
    session.votes.append(vote)

    if t == session.total:
        for aa in session.assertions:
            if aa.status == "open":
                aa.status = "exhausted"
    return session_status(session, with_bounds=False)


def session_status(session: AuditSession, with_bounds: bool = True) -> CertificationReport:
    """Aggregate per-assertion statuses; overall certified iff all certified."""
    reports = []
    for aa in session.assertions:
        lower = upper = None
        if with_bounds:
            if aa.conf.two_sided:
                iv = aa.conf.interval()
                lower, upper = iv.lower, iv.upper
            else:
                lower = aa.conf.lower()
        reports.append(
            AssertionReport(
                assertion=aa.label,
                winner=aa.assertion.winner,
                loser=aa.assertion.loser,
                status=aa.status,
                stopped_at=aa.stopped_at,
                level=aa.level,
                lower=lower,
                upper=upper,
            )
        )
    if all(aa.status == "certified" for aa in session.assertions):
        overall = "certified"
        certified_at = max(aa.stopped_at for aa in session.assertions)
    elif len(session.votes) == session.total:
        overall = "exhausted"
        certified_at = None
    else:
        overall = "open"
        certified_at = None
    return CertificationReport(
        assertions=reports,
        overall_status=overall,
        certified_at=certified_at,
        ballots_recorded=len(session.votes),
    )


# ---------------------------------------------------------------------------
# snapshots


def _encode_rng_state(rng: np.random.Generator) -> dict:
    state = rng.bit_generator.state
    def enc(v):
        if isinstance(v, np.ndarray):
            return [str(int(e)) for e in v]
        if isinstance(v, (np.integer, int)):
            return str(int(v))
        return v
    return {
        "bit_generator": state["bit_generator"],
        "state": {k: enc(v) for k, v in state["state"].items()},
        "buffer": enc(state["buffer"]),
        "buffer_pos": int(state["buffer_pos"]),
        "has_uint32": int(state["has_uint32"]),
        "uinteger": str(int(state["uinteger"])),
    }


def _decode_rng_state(payload: dict) -> dict:
    return {
        "bit_generator": payload["bit_generator"],
        "state": {
            "counter": np.array([int(v) for v in payload["state"]["counter"]], dtype=np.uint64),
            "key": np.array([int(v) for v in payload["state"]["key"]], dtype=np.uint64),
        },
        "buffer": np.array([int(v) for v in payload["buffer"]], dtype=np.uint64),
        "buffer_pos": int(payload["buffer_pos"]),
        "has_uint32": int(payload["has_uint32"]),
        "uinteger": int(payload["uinteger"]),
    }


def snapshot_session(session: AuditSession) -> str:
    """Loss-free JSON snapshot, byte-stable for identical session states."""
    assertions = []
    for aa in session.assertions:
        cert = aa.cert_state
        assertions.append(
            {
                "winner": aa.assertion.winner,
                "loser": aa.assertion.loser,
                "level": aa.level,
                "log_max": aa.log_max,
                "status": aa.status,
                "stopped_at": aa.stopped_at,
                "cert": {
                    "t": cert.mean_state.t,
                    "prefix_sum": cert.mean_state.prefix_sum,
                    "refuted": cert.refuted,
                    "log_plus": list(map(float, cert.log_plus)),
                },
                "conf_cache": {
                    "lower": aa.conf._lower,
                    "lower_at": aa.conf._lower_at,
                    "interval": [aa.conf._interval.lower, aa.conf._interval.upper],
                    "interval_degenerate": aa.conf._interval.degenerate,
                    "interval_at": aa.conf._interval_at,
                },
            }
        )
    payload = {
        "version": SNAPSHOT_VERSION,
        "contest": {
            "counts": dict(session.contest.counts),
            "total_ballots": session.contest.total_ballots,
        },
        "num_winners": session.num_winners,
        "alpha": session.alpha,
        "mode": session.mode,
        "strategy": session.strategy_name,
        "seed": session.seed,
        "grid_size": session.grid_size,
        "beta": session.beta,
        "manifest": session.manifest if session.explicit_manifest else None,
        "log": [
            [i + 1, bid, session.votes[i] if i < len(session.votes) else None]
            for i, bid in enumerate(session.drawn)
        ],
        "rng_state": _encode_rng_state(session.rng),
        "assertions": assertions,
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def restore_session(blob: str | dict) -> AuditSession:
    """Rebuild a session from a snapshot, including the generator position."""
    try:
        payload = json.loads(blob) if isinstance(blob, str) else blob
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"corrupted snapshot: {exc}") from exc
    if not isinstance(payload, dict) or "version" not in payload:
        raise SnapshotError("corrupted snapshot: missing version")
    if payload["version"] != SNAPSHOT_VERSION:
        raise SnapshotError(
            f"snapshot version {payload['version']} does not match {SNAPSHOT_VERSION}"
        )
    contest = ContestResult(
        counts={k: int(v) for k, v in payload["contest"]["counts"].items()},
        total_ballots=int(payload["contest"]["total_ballots"]),
    )
    session = create_session(
        contest,
        alpha=payload["alpha"],
        strategy=payload["strategy"],
        mode=payload["mode"],
        seed=payload["seed"],
        num_winners=payload["num_winners"],
        manifest=payload["manifest"],
        grid_size=payload["grid_size"],
        beta=payload["beta"],
    )
    session.rng.bit_generator.state = _decode_rng_state(payload["rng_state"])
    drawn = [entry[1] for entry in payload["log"]]
    votes = [entry[2] for entry in payload["log"] if entry[2] is not None]
    session.drawn = drawn
    session.votes = votes
    drawn_set = set(drawn)
    session._remaining = [bid for bid in session.manifest if bid not in drawn_set]

    if len(payload["assertions"]) != len(session.assertions):
        raise SnapshotError("assertion set does not match contest")
    for aa, rec in zip(session.assertions, payload["assertions"]):
        if aa.assertion.winner != rec["winner"] or aa.assertion.loser != rec["loser"]:
            raise SnapshotError("assertion ordering mismatch")
        aa.level = rec["level"]
        aa.log_max = rec["log_max"]
        aa.status = rec["status"]
        aa.stopped_at = rec["stopped_at"]
        cert = rec["cert"]
        aa.cert_state.mean_state.t = cert["t"]
        aa.cert_state.mean_state.prefix_sum = cert["prefix_sum"]
        aa.cert_state.refuted = cert["refuted"]
        aa.cert_state.log_plus = np.asarray(cert["log_plus"], dtype=float)
        for i in range(len(votes)):
            aa.conf.append(encode_vote(votes[i], aa.assertion))
        cache = rec["conf_cache"]
        aa.conf._lower = cache["lower"]
        aa.conf._lower_at = cache["lower_at"]
        aa.conf._interval = IntervalResult(
            cache["interval"][0], cache["interval"][1], cache["interval_degenerate"]
        )
        aa.conf._interval_at = cache["interval_at"]
    return session

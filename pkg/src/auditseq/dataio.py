"""Contest and manifest files, plus trajectory exports.

Contest CSV header (one row per candidate, rows grouped by contest):

    contest_id,district,candidate,party,votes,total_ballots

Ballot manifest CSV header (``vote`` column optional, for demo replays):

    ballot_id,vote

Trajectory CSV header (``upper`` present only for tally-mode sessions;
extra ``p_at_<null>`` columns appear when nulls are requested):

    t,assertion,lower[,upper],p_value[,p_at_<null>...]
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from auditseq.confseq import ConfidenceConfig, ConfidenceState, anytime_p_values
from auditseq.engine import AuditSession, encode_vote
from auditseq.population import ContestResult

__all__ = [
    "CONTEST_HEADER",
    "ContestFile",
    "BallotManifestFile",
    "ContestValidationError",
    "demo_manifest",
    "export_trajectories",
    "load_contests",
    "load_manifest",
    "parse_contests",
    "sample_contests_path",
    "trajectory_rows",
    "write_manifest",
]

CONTEST_HEADER = ["contest_id", "district", "candidate", "party", "votes", "total_ballots"]
MANIFEST_HEADER = ["ballot_id", "vote"]


class ContestValidationError(ValueError):
    """Raised with the offending line number when a contest file is malformed."""


@dataclass
class ContestFile:
    """Reported results for one contest: candidates, parties, counts, total."""

    contest_id: str
    district: str
    candidates: dict[str, int]
    parties: dict[str, str] = field(default_factory=dict)
    total_ballots: int = 0

    def result(self) -> ContestResult:
        return ContestResult(counts=dict(self.candidates), total_ballots=self.total_ballots)

    @property
    def invalid(self) -> int:
        return self.total_ballots - sum(self.candidates.values())


@dataclass
class BallotManifestFile:
    """Ordered ballot ids, optionally paired with ground-truth votes."""

    ballot_ids: list[str]
    votes: dict[str, str] | None = None

    def __post_init__(self):
        if len(set(self.ballot_ids)) != len(self.ballot_ids):
            raise ValueError("ballot ids must be unique")


def sample_contests_path() -> Path:
    """Path of the bundled sample dataset (district/party schema)."""
    return Path(str(resources.files("auditseq").joinpath("data/sample_contests.csv")))


def parse_contests(text: str, source: str = "<string>") -> list[ContestFile]:
    """Parse contest CSV text, reporting malformed rows with line numbers."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        warnings.warn(f"{source}: empty contest file")
        return []
    missing = [col for col in CONTEST_HEADER if col not in reader.fieldnames]
    if missing:
        raise ContestValidationError(
            f"{source}: missing columns: {', '.join(missing)}"
        )
    contests: dict[str, ContestFile] = {}
    for row in reader:
        line = reader.line_num
        cid = (row["contest_id"] or "").strip()
        candidate = (row["candidate"] or "").strip()
        if not cid or not candidate:
            raise ContestValidationError(f"{source}:{line}: contest_id and candidate are required")
        try:
            votes = int(row["votes"])
            total = int(row["total_ballots"])
        except (TypeError, ValueError):
            raise ContestValidationError(f"{source}:{line}: votes and total_ballots must be integers")
        if votes < 0:
            raise ContestValidationError(f"{source}:{line}: negative vote count")
        contest = contests.setdefault(
            cid,
            ContestFile(contest_id=cid, district=(row["district"] or "").strip(),
                        candidates={}, total_ballots=total),
        )
        if contest.total_ballots != total:
            raise ContestValidationError(
                f"{source}:{line}: inconsistent total_ballots for contest {cid!r}"
            )
        if candidate in contest.candidates:
            raise ContestValidationError(
                f"{source}:{line}: duplicate candidate {candidate!r} in contest {cid!r}"
            )
        contest.candidates[candidate] = votes
        contest.parties[candidate] = (row["party"] or "").strip()
        if sum(contest.candidates.values()) > total:
            raise ContestValidationError(
                f"{source}:{line}: candidate counts exceed total_ballots in contest {cid!r}"
            )
    if not contests:
        warnings.warn(f"{source}: contest file has a header but no rows")
    return list(contests.values())


def load_contests(path: str | Path) -> list[ContestFile]:
    """Load and validate a contest CSV file."""
    path = Path(path)
    return parse_contests(path.read_text(), source=str(path))


def load_manifest(path: str | Path) -> BallotManifestFile:
    """Load a ballot manifest; the vote column is optional."""
    path = Path(path)
    ids: list[str] = []
    votes: dict[str, str] = {}
    with path.open() as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "ballot_id" not in reader.fieldnames:
            raise ContestValidationError(f"{path}: manifest needs a ballot_id column")
        has_votes = "vote" in reader.fieldnames
        for row in reader:
            bid = row["ballot_id"].strip()
            ids.append(bid)
            if has_votes and row["vote"] not in (None, ""):
                votes[bid] = row["vote"].strip()
    return BallotManifestFile(ballot_ids=ids, votes=votes or None)


def write_manifest(manifest: BallotManifestFile, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for bid in manifest.ballot_ids:
            vote = manifest.votes.get(bid, "") if manifest.votes else ""
            writer.writerow([bid, vote])


def demo_manifest(contest: ContestFile) -> BallotManifestFile:
    """Deterministic ground-truth manifest matching the reported totals.

    Ballots are laid out candidate block by candidate block, then invalid
    ballots; the audit shuffles draws, so the layout carries no information.
    """
    ids: list[str] = []
    votes: dict[str, str] = {}
    counter = 0
    width = len(str(contest.total_ballots))
    for candidate, count in contest.candidates.items():
        for _ in range(count):
            counter += 1
            bid = f"b{counter:0{width}d}"
            ids.append(bid)
            votes[bid] = candidate
    for _ in range(contest.invalid):
        counter += 1
        bid = f"b{counter:0{width}d}"
        ids.append(bid)
        votes[bid] = "invalid"
    return BallotManifestFile(ballot_ids=ids, votes=votes)


# ---------------------------------------------------------------------------
# trajectory exports


def trajectory_rows(session: AuditSession, nulls: list[float] | None = None) -> list[dict]:
    """One row per (t, assertion): running bounds and the anytime p-value.

    Row ``t=0`` reports the trivial state (lower 0, p-value 1).  Bounds are
    recomputed from the recorded votes, so exports are deterministic
    whether or not the live session ever queried them.
    """
    nulls = nulls or []
    two_sided = session.mode == "rlt"
    rows: list[dict] = []
    per_assertion: list[list[dict]] = []
    for aa in session.assertions:
        x = np.array([encode_vote(v, aa.assertion) for v in session.votes])
        conf = ConfidenceState(
            aa.strategy, session.total,
            ConfidenceConfig(alpha=aa.level, side="two_sided" if two_sided else "lower"),
        )
        p_path = anytime_p_values(x, aa.strategy, aa.assertion.threshold, session.total)
        null_paths = {
            mu0: anytime_p_values(x, aa.strategy, mu0, session.total) for mu0 in nulls
        }
        entries = []
        row = {"t": 0, "assertion": aa.label, "lower": 0.0}
        if two_sided:
            row["upper"] = 1.0
        row["p_value"] = 1.0
        for mu0 in nulls:
            row[f"p_at_{mu0:g}"] = 1.0
        entries.append(row)
        for i in range(len(session.votes)):
            conf.append(x[i])
            row = {"t": i + 1, "assertion": aa.label}
            if two_sided:
                iv = conf.interval()
                row["lower"], row["upper"] = iv.lower, iv.upper
            else:
                row["lower"] = conf.lower()
            row["p_value"] = float(p_path[i])
            for mu0 in nulls:
                row[f"p_at_{mu0:g}"] = float(null_paths[mu0][i])
            entries.append(row)
        per_assertion.append(entries)
    for t in range(len(session.votes) + 1):
        for entries in per_assertion:
            rows.append(entries[t])
    return rows


def export_trajectories(
    session: AuditSession, nulls: list[float] | None = None
) -> str:
    """Render trajectory rows as CSV with a stable column order."""
    rows = trajectory_rows(session, nulls=nulls)
    columns = ["t", "assertion", "lower"]
    if session.mode == "rlt":
        columns.append("upper")
    columns.append("p_value")
    for mu0 in nulls or []:
        columns.append(f"p_at_{mu0:g}")
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns])
    return out.getvalue()

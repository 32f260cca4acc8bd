import itertools
import math

import numpy as np
import pytest

from auditseq.engine import (
    ExhaustedError,
    InvalidVoteError,
    SnapshotError,
    UnknownBallotError,
    WrongBallotError,
    create_session,
    draw_next,
    encode_vote,
    record_ballot,
    restore_session,
    session_status,
    snapshot_session,
)
from auditseq.population import Assertion, ContestResult


def run_manifest(session, votes, stop_when_certified=True):
    """Drive a session from a ballot -> vote map; returns the final report."""
    while session.revision < session.total:
        ballot = session.pending_ballot or draw_next(session)
        report = record_ballot(session, ballot, votes[ballot])
        if stop_when_certified and report.overall_status == "certified":
            break
    return session_status(session, with_bounds=False)


def default_votes(counts, total):
    truth = []
    for name, c in counts.items():
        truth.extend([name] * c)
    truth.extend(["invalid"] * (total - len(truth)))
    return {str(i + 1): truth[i] for i in range(total)}


class TestCreateSession:
    def test_two_candidate_rla(self):
        contest = ContestResult(counts={"a": 60, "b": 40}, total_ballots=100)
        s = create_session(contest, alpha=0.05, strategy="sqkelly")
        assert len(s.assertions) == 1
        assert s.assertions[0].level == 0.05

    def test_seven_candidate_single_winner(self):
        counts = {"w": 40, "l1": 10, "l2": 9, "l3": 8, "l4": 7, "l5": 6, "l6": 5}
        contest = ContestResult(counts=counts, total_ballots=90)
        s = create_session(contest, alpha=0.05, strategy="sqkelly")
        assert len(s.assertions) == 6
        assert all(aa.level == 0.05 for aa in s.assertions)
        assert all(aa.assertion.winner == "w" for aa in s.assertions)

    def test_rlt_bonferroni(self):
        contest = ContestResult(counts={"a": 50, "b": 30, "c": 20}, total_ballots=100)
        s = create_session(contest, alpha=0.05, strategy="sqkelly", mode="rlt")
        assert len(s.assertions) == 2
        assert all(aa.level == pytest.approx(0.025) for aa in s.assertions)

    def test_rlt_rejects_apk(self):
        contest = ContestResult(counts={"a": 50, "b": 50}, total_ballots=100)
        with pytest.raises(ValueError):
            create_session(contest, alpha=0.05, strategy="apk", mode="rlt")

    def test_alpha_validation(self):
        contest = ContestResult(counts={"a": 5, "b": 5}, total_ballots=10)
        for alpha in (0.0, 1.0, -0.2, 2.0):
            with pytest.raises(ValueError):
                create_session(contest, alpha=alpha, strategy="sqkelly")

    def test_apk_bets_per_pair(self):
        counts = {"w": 50, "l1": 30, "l2": 10}
        contest = ContestResult(counts=counts, total_ballots=100)
        s = create_session(contest, alpha=0.1, strategy="apk")
        lams = {aa.assertion.loser: aa.strategy.lam for aa in s.assertions}
        assert lams["l1"] == pytest.approx(2 * 20 / 80)
        assert lams["l2"] == pytest.approx(2 * 40 / 60)


class TestDrawNext:
    def test_single_ballot(self):
        contest = ContestResult(counts={"a": 1, "b": 0}, total_ballots=1)
        s = create_session(contest, alpha=0.5, strategy="sqkelly")
        assert draw_next(s) == "1"
        with pytest.raises(ExhaustedError):
            draw_next(s)

    def test_exhaustive_draws_form_permutation(self):
        contest = ContestResult(counts={"a": 12, "b": 8}, total_ballots=20)
        s = create_session(contest, alpha=0.05, strategy="sqkelly", seed=9)
        drawn = [draw_next(s) for _ in range(20)]
        assert sorted(drawn, key=int) == [str(i) for i in range(1, 21)]

    def test_replay_determinism(self):
        contest = ContestResult(counts={"a": 30, "b": 20}, total_ballots=50)
        a = create_session(contest, alpha=0.05, strategy="sqkelly", seed=123)
        b = create_session(contest, alpha=0.05, strategy="sqkelly", seed=123)
        assert [draw_next(a) for _ in range(50)] == [draw_next(b) for _ in range(50)]


class TestRecordBallot:
    def test_winner_vote_encodes_one_everywhere(self):
        counts = {"w": 3, "l1": 2, "l2": 1}
        assertion1 = Assertion(winner="w", loser="l1")
        assertion2 = Assertion(winner="w", loser="l2")
        assert encode_vote("w", assertion1) == 1.0
        assert encode_vote("w", assertion2) == 1.0

    def test_other_candidate_encodes_half(self):
        assertion = Assertion(winner="w", loser="l1")
        assert encode_vote("l2", assertion) == 0.5
        assert encode_vote("invalid", assertion) == 0.5
        assert encode_vote("l1", assertion) == 0.0

    def test_tie_exhausts_without_certifying(self):
        contest = ContestResult(counts={"a": 2, "b": 2}, total_ballots=4)
        s = create_session(contest, alpha=0.05, strategy="sqkelly", seed=5)
        votes = default_votes(contest.counts, 4)
        report = run_manifest(s, votes, stop_when_certified=False)
        assert report.overall_status == "exhausted"
        assert report.assertions[0].status == "exhausted"
        full = session_status(s)
        assert full.assertions[0].lower <= 0.5

    def test_unknown_and_wrong_and_double(self):
        contest = ContestResult(counts={"a": 3, "b": 1}, total_ballots=4)
        s = create_session(contest, alpha=0.05, strategy="sqkelly", seed=1)
        first = draw_next(s)
        with pytest.raises(UnknownBallotError):
            record_ballot(s, "zzz", "a")
        second_choices = [b for b in ("1", "2", "3", "4") if b != first]
        with pytest.raises(WrongBallotError):
            record_ballot(s, second_choices[0], "a")
        record_ballot(s, first, "a")
        draw_next(s)
        with pytest.raises(WrongBallotError):
            record_ballot(s, first, "a")

    def test_invalid_vote_token(self):
        contest = ContestResult(counts={"a": 3, "b": 1}, total_ballots=4)
        s = create_session(contest, alpha=0.05, strategy="sqkelly", seed=1)
        ballot = draw_next(s)
        with pytest.raises(InvalidVoteError) as err:
            record_ballot(s, ballot, "zaphod")
        assert "a" in err.value.valid_tokens
        assert "invalid" in err.value.valid_tokens

    def test_exhaustion_matches_ground_truth(self):
        # every small electorate, fully counted, resolves the assertion
        # "a beat b" to the true comparison, whatever was reported
        for n_a, n_b, n_i in itertools.product(range(4), range(4), range(3)):
            total = n_a + n_b + n_i
            if total == 0:
                continue
            contest = ContestResult(counts={"a": total, "b": 0}, total_ballots=total)
            s = create_session(contest, alpha=0.05, strategy="dkelly", seed=7)
            truth = ["a"] * n_a + ["b"] * n_b + ["invalid"] * n_i
            votes = {str(i + 1): truth[i] for i in range(total)}
            report = run_manifest(s, votes, stop_when_certified=False)
            if n_a > n_b:
                assert report.assertions[0].status == "certified", (n_a, n_b, n_i)
            else:
                assert report.assertions[0].status == "exhausted", (n_a, n_b, n_i)

    def test_certification_is_sticky(self):
        contest = ContestResult(counts={"a": 40, "b": 4}, total_ballots=44)
        s = create_session(contest, alpha=0.1, strategy="sqkelly", seed=3)
        votes = default_votes(contest.counts, 44)
        certified_at = None
        while s.revision < s.total:
            ballot = s.pending_ballot or draw_next(s)
            report = record_ballot(s, ballot, votes[ballot])
            if certified_at is None and report.assertions[0].status == "certified":
                certified_at = report.assertions[0].stopped_at
            if certified_at is not None:
                assert report.assertions[0].status == "certified"
                assert report.assertions[0].stopped_at == certified_at


class TestSessionStatus:
    def test_all_open(self):
        contest = ContestResult(counts={"a": 5, "b": 3}, total_ballots=8)
        s = create_session(contest, alpha=0.05, strategy="sqkelly")
        report = session_status(s, with_bounds=False)
        assert report.overall_status == "open"
        assert report.certified_at is None

    def test_partial_certification_keeps_overall_open(self):
        # one lopsided pair certifies long before the close pair
        counts = {"w": 60, "l1": 35, "l2": 5}
        contest = ContestResult(counts=counts, total_ballots=100)
        s = create_session(contest, alpha=0.05, strategy="sqkelly", seed=2)
        votes = default_votes(counts, 100)
        seen_partial = False
        while s.revision < s.total:
            ballot = s.pending_ballot or draw_next(s)
            report = record_ballot(s, ballot, votes[ballot])
            statuses = {r.status for r in report.assertions}
            if statuses == {"certified"}:
                break
            if "certified" in statuses:
                seen_partial = True
                assert report.overall_status == "open"
        assert report.overall_status == "certified"
        assert seen_partial

    def test_overall_index_is_max_of_assertion_indices(self):
        counts = {"w": 70, "l1": 20, "l2": 10}
        contest = ContestResult(counts=counts, total_ballots=100)
        s = create_session(contest, alpha=0.05, strategy="sqkelly", seed=11)
        votes = default_votes(counts, 100)
        report = run_manifest(s, votes)
        assert report.overall_status == "certified"
        assert report.certified_at == max(r.stopped_at for r in report.assertions)


@pytest.mark.slow
class TestMonteCarloInvariants:
    def test_multi_contest_risk_with_one_false_assertion(self):
        # rigged 7-candidate contest: the reported winner actually lost to
        # one opponent; certifying the whole contest requires certifying the
        # false pair, so the overall rate must stay within the risk budget
        import math

        from auditseq.martingale import ConvexGrid, PathScanner, make_weights
        from auditseq.simulator import replication_rng

        alpha, runs, N = 0.05, 2000, 1000
        truth = {"w": 470, "l1": 480, "l2": 10, "l3": 10, "l4": 10, "l5": 10, "l6": 10}
        labels = []
        for name, count in truth.items():
            labels.extend([name] * count)
        labels = np.array(labels)
        losers = ["l1", "l2", "l3", "l4", "l5", "l6"]
        weights = make_weights("square", 100)
        overall = 0
        for rep in range(runs):
            perm = replication_rng(811, rep).permutation(labels)
            all_crossed = True
            for loser in losers:
                x = np.where(perm == "w", 1.0, np.where(perm == loser, 0.0, 0.5))
                scanner = PathScanner(ConvexGrid(weights), N, 0.5)
                if scanner.scan_until(x, alpha) is None:
                    all_crossed = False
                    break
            if all_crossed:
                overall += 1
        bound = alpha + 3 * math.sqrt(alpha * (1 - alpha) / runs)
        assert overall / runs <= bound

    def test_rlt_simultaneous_coverage(self):
        # two true assertions at alpha/2 each: simultaneous miscoverage of
        # both true means stays within the overall budget (Bonferroni)
        import math

        from auditseq.martingale import PathScanner, TwoSided, make_weights
        from auditseq.simulator import replication_rng

        alpha, runs, N = 0.05, 2000, 600
        truth = {"w": 300, "l1": 200, "l2": 100}
        labels = []
        for name, count in truth.items():
            labels.extend([name] * count)
        labels = np.array(labels)
        weights = make_weights("square", 100)
        strategy = TwoSided(weights, weights, beta=0.5)
        means = {
            "l1": (truth["w"] + 0.5 * truth["l2"]) / N,
            "l2": (truth["w"] + 0.5 * truth["l1"]) / N,
        }
        misses = 0
        for rep in range(runs):
            perm = replication_rng(911, rep).permutation(labels)
            missed = False
            for loser, mu_star in means.items():
                x = np.where(perm == "w", 1.0, np.where(perm == loser, 0.0, 0.5))
                scanner = PathScanner(strategy, N, mu_star)
                if scanner.scan_until(x, alpha / 2) is not None:
                    missed = True
                    break
            if missed:
                misses += 1
        bound = alpha + 3 * math.sqrt(alpha * (1 - alpha) / runs)
        assert misses / runs <= bound


class TestSnapshots:
    def _session_mid_audit(self):
        contest = ContestResult(counts={"a": 30, "b": 15}, total_ballots=45)
        s = create_session(contest, alpha=0.05, strategy="sqkelly", seed=21)
        votes = default_votes(contest.counts, 45)
        for _ in range(10):
            ballot = s.pending_ballot or draw_next(s)
            record_ballot(s, ballot, votes[ballot])
        return s, votes

    def test_round_trip_identity(self):
        s, _ = self._session_mid_audit()
        blob = snapshot_session(s)
        restored = restore_session(blob)
        assert snapshot_session(restored) == blob
        assert draw_next(restored) == draw_next(s)

    def test_resume_equals_uninterrupted(self):
        s, votes = self._session_mid_audit()
        blob = snapshot_session(s)
        restored = restore_session(blob)
        r1 = run_manifest(s, votes, stop_when_certified=False)
        r2 = run_manifest(restored, votes, stop_when_certified=False)
        assert r1 == r2
        assert snapshot_session(s) == snapshot_session(restored)

    def test_version_mismatch(self):
        s, _ = self._session_mid_audit()
        blob = snapshot_session(s).replace('"version":1', '"version":99')
        with pytest.raises(SnapshotError):
            restore_session(blob)

    def test_corrupted_payload(self):
        with pytest.raises(SnapshotError):
            restore_session("{not json")

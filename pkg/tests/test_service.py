import pytest
from fastapi.testclient import TestClient

from auditseq import dataio
from auditseq.engine import create_session, draw_next, record_ballot
from auditseq.service import create_app


@pytest.fixture
def client():
    return TestClient(create_app())


def demo_votes(client, contest_id="demo-ward"):
    body = client.get(f"/contests/{contest_id}/manifest").json()
    return {b["ballot_id"]: b["vote"] for b in body["ballots"]}


def drive_to_certification(client, contest_id="demo-ward", seed=7, **params):
    votes = demo_votes(client, contest_id)
    created = client.post(
        "/sessions",
        json={"contest_id": contest_id, "seed": seed, **params},
    ).json()
    sid, ballot = created["session_id"], created["first_ballot"]
    body = created
    while ballot is not None:
        body = client.post(
            f"/sessions/{sid}/ballots", json={"ballot_id": ballot, "vote": votes[ballot]}
        ).json()
        if body["overall_status"] == "certified":
            break
        ballot = body["next_ballot"]
    return sid, body


class TestContests:
    def test_bundled_sample_served(self, client):
        contests = client.get("/contests").json()
        assert len(contests) >= 1
        assert all("candidates" in c for c in contests)

    def test_waterloo_totals(self, client):
        body = client.get("/contests/waterloo").json()
        assert body["candidates"]["Liberal"] == 31085
        assert body["total_ballots"] == 63708

    def test_unknown_contest(self, client):
        assert client.get("/contests/nowhere").status_code == 404

    def test_ingest_malformed_csv(self, client):
        r = client.post(
            "/contests",
            content=(
                "contest_id,district,candidate,party,votes,total_ballots\n"
                "c1,D,alice,P,6,10\nc1,D,bob,P,5,10\n"
            ),
        )
        assert r.status_code == 400
        assert ":3:" in r.json()["detail"]

    def test_ingest_then_get(self, client):
        r = client.post(
            "/contests",
            content=(
                "contest_id,district,candidate,party,votes,total_ballots\n"
                "northside,Northside,ann,P1,70,130\nnorthside,Northside,bo,P2,50,130\n"
            ),
        )
        assert r.status_code == 201
        body = client.get("/contests/northside").json()
        assert body["candidates"] == {"ann": 70, "bo": 50}
        assert body["invalid"] == 10


class TestSessions:
    def test_create_returns_first_ballot(self, client):
        r = client.post("/sessions", json={"contest_id": "demo-ward", "seed": 1})
        assert r.status_code == 201
        body = r.json()
        assert body["first_ballot"]
        assert body["revision"] == 0

    def test_invalid_alpha_422(self, client):
        r = client.post("/sessions", json={"contest_id": "demo-ward", "alpha": 0.0})
        assert r.status_code == 422

    def test_rlt_apk_422(self, client):
        r = client.post(
            "/sessions",
            json={"contest_id": "demo-ward", "strategy": "apk", "mode": "rlt"},
        )
        assert r.status_code == 422

    def test_same_seed_same_first_draw(self, client):
        a = client.post("/sessions", json={"contest_id": "demo-ward", "seed": 3}).json()
        b = client.post("/sessions", json={"contest_id": "demo-ward", "seed": 3}).json()
        assert a["first_ballot"] == b["first_ballot"]

    def test_unknown_contest_404(self, client):
        assert client.post("/sessions", json={"contest_id": "zzz"}).status_code == 404


class TestBallots:
    def test_winner_vote_raises_lower_bounds(self, client):
        votes = demo_votes(client)
        created = client.post("/sessions", json={"contest_id": "demo-ward", "seed": 5}).json()
        sid, ballot = created["session_id"], created["first_ballot"]
        before = {a["assertion"]: a["lower"] for a in created["assertions"]}
        r = client.post(
            f"/sessions/{sid}/ballots", json={"ballot_id": ballot, "vote": "Alder"}
        )
        after = {a["assertion"]: a["lower"] for a in r.json()["assertions"]}
        for label in before:
            assert after[label] > before[label]

    def test_unlisted_vote_400_names_tokens(self, client):
        created = client.post("/sessions", json={"contest_id": "demo-ward", "seed": 5}).json()
        sid, ballot = created["session_id"], created["first_ballot"]
        r = client.post(
            f"/sessions/{sid}/ballots", json={"ballot_id": ballot, "vote": "Cedar"}
        )
        assert r.status_code == 400
        assert "Alder" in r.json()["detail"]
        assert "invalid" in r.json()["detail"]

    def test_wrong_ballot_409(self, client):
        created = client.post("/sessions", json={"contest_id": "demo-ward", "seed": 5}).json()
        sid = created["session_id"]
        r = client.post(
            f"/sessions/{sid}/ballots", json={"ballot_id": "not-drawn", "vote": "Alder"}
        )
        assert r.status_code == 409
        assert created["first_ballot"] in r.json()["detail"]

    def test_duplicate_post_rejected_without_change(self, client):
        votes = demo_votes(client)
        created = client.post("/sessions", json={"contest_id": "demo-ward", "seed": 5}).json()
        sid, first = created["session_id"], created["first_ballot"]
        ok = client.post(
            f"/sessions/{sid}/ballots", json={"ballot_id": first, "vote": votes[first]}
        ).json()
        dup = client.post(
            f"/sessions/{sid}/ballots",
            json={"ballot_id": first, "vote": votes[first], "revision": 0},
        )
        assert dup.status_code == 409
        state = client.get(f"/sessions/{sid}/state").json()
        assert state["revision"] == ok["revision"] == 1

    def test_posting_after_certification_allowed(self, client):
        sid, body = drive_to_certification(client)
        assert body["overall_status"] == "certified"
        votes = demo_votes(client)
        nxt = body["next_ballot"]
        r = client.post(
            f"/sessions/{sid}/ballots", json={"ballot_id": nxt, "vote": votes[nxt]}
        )
        assert r.status_code == 200
        assert r.json()["overall_status"] == "certified"
        assert r.json()["certified_at"] == body["certified_at"]

    def test_unknown_session_404(self, client):
        r = client.post("/sessions/ghost/ballots", json={"ballot_id": "1", "vote": "x"})
        assert r.status_code == 404


class TestState:
    def test_full_then_delta_concatenation(self, client):
        votes = demo_votes(client)
        created = client.post("/sessions", json={"contest_id": "demo-ward", "seed": 9}).json()
        sid, ballot = created["session_id"], created["first_ballot"]
        for _ in range(6):
            body = client.post(
                f"/sessions/{sid}/ballots", json={"ballot_id": ballot, "vote": votes[ballot]}
            ).json()
            ballot = body["next_ballot"]
        mid = client.get(f"/sessions/{sid}/state", params={"since_revision": 0}).json()
        for _ in range(5):
            body = client.post(
                f"/sessions/{sid}/ballots", json={"ballot_id": ballot, "vote": votes[ballot]}
            ).json()
            ballot = body["next_ballot"]
        delta = client.get(
            f"/sessions/{sid}/state", params={"since_revision": mid["revision"]}
        ).json()
        full = client.get(f"/sessions/{sid}/state", params={"since_revision": 0}).json()
        assert mid["rows"] + delta["rows"] == full["rows"]

    def test_current_revision_times_out_empty(self, client):
        created = client.post("/sessions", json={"contest_id": "demo-ward", "seed": 2}).json()
        sid = created["session_id"]
        r = client.get(
            f"/sessions/{sid}/state",
            params={"since_revision": 0, "timeout": 0.05},
        ).json()
        # nothing recorded yet: only the t=0 baseline rows
        assert all(row["t"] == 0 for row in r["rows"])
        delta = client.get(
            f"/sessions/{sid}/state",
            params={"since_revision": r["revision"] or 0, "timeout": 0.05},
        ).json()
        assert [row for row in delta["rows"] if row["t"] > 0] == []

    def test_export_matches_rows(self, client):
        sid, _ = drive_to_certification(client)
        state = client.get(f"/sessions/{sid}/state", params={"since_revision": 0}).json()
        csv_text = client.get(f"/sessions/{sid}/export.csv").text
        lines = csv_text.splitlines()
        assert lines[0] == "t,assertion,lower,p_value"
        assert len(lines) - 1 == len(state["rows"])
        for line, row in zip(lines[1:], state["rows"]):
            t, label, lower, p = line.split(",")
            assert int(t) == row["t"]
            assert label == row["assertion"]
            assert float(lower) == row["lower"]
            assert float(p) == row["p_value"]


class TestEquivalence:
    def test_http_matches_library_certification_index(self, client):
        sid, body = drive_to_certification(client, seed=12)
        contest = next(
            c for c in dataio.load_contests(dataio.sample_contests_path())
            if c.contest_id == "demo-ward"
        )
        manifest = dataio.demo_manifest(contest)
        session = create_session(
            contest.result(), alpha=0.05, strategy="sqkelly", seed=12,
            manifest=manifest.ballot_ids,
        )
        while session.revision < session.total:
            ballot = session.pending_ballot or draw_next(session)
            report = record_ballot(session, ballot, manifest.votes[ballot])
            if report.overall_status == "certified":
                break
        assert body["certified_at"] == report.certified_at


class TestPersistence:
    def test_sessions_survive_restart(self, tmp_path):
        app = create_app(sessions_dir=str(tmp_path))
        client = TestClient(app)
        votes = demo_votes(client)
        created = client.post("/sessions", json={"contest_id": "demo-ward", "seed": 4}).json()
        sid, ballot = created["session_id"], created["first_ballot"]
        for _ in range(3):
            body = client.post(
                f"/sessions/{sid}/ballots", json={"ballot_id": ballot, "vote": votes[ballot]}
            ).json()
            ballot = body["next_ballot"]
        app2 = create_app(sessions_dir=str(tmp_path))
        client2 = TestClient(app2)
        state = client2.get(f"/sessions/{sid}/state").json()
        assert state["revision"] == 3
        assert state["pending_ballot"] == ballot

import { ApiError, AuditApi } from "./api.js";
import { drawChart } from "./chart.js";
import { DemoFeeder } from "./feeder.js";
import { applyState, emptyState, type DashboardState } from "./state.js";
import type { ContestSummary } from "./types.js";

const baseUrl =
  new URLSearchParams(location.search).get("service") ?? location.origin;
const api = new AuditApi(baseUrl);

const el = <T extends HTMLElement>(id: string) =>
  document.getElementById(id) as T;

let state: DashboardState = emptyState();
let selectedContest: ContestSummary | null = null;
let pendingVote: string | null = null;
let feeder: DemoFeeder | null = null;

function setBanner(text: string, kind: "info" | "error" | "success" = "info") {
  const banner = el<HTMLDivElement>("banner");
  banner.textContent = text;
  banner.className = `banner ${kind}`;
  banner.style.display = text ? "block" : "none";
}

async function loadContests() {
  const table = el<HTMLTableSectionElement>("contest-rows");
  try {
    const contests = await api.listContests();
    table.innerHTML = "";
    if (!contests.length) {
      setBanner("No contests loaded yet; POST a contest CSV to /contests.", "info");
      return;
    }
    for (const contest of contests) {
      const tr = document.createElement("tr");
      const totals = Object.entries(contest.candidates)
        .map(([name, votes]) => `${name} ${votes.toLocaleString()}`)
        .join(", ");
      tr.innerHTML = `<td>${contest.contest_id}</td><td>${contest.district}</td>` +
        `<td>${contest.total_ballots.toLocaleString()}</td>`;
      tr.title = totals;
      tr.onclick = () => selectContest(contest);
      table.appendChild(tr);
    }
    setBanner("");
  } catch {
    setBanner("Audit service unreachable; retrying in 3s…", "error");
    setTimeout(loadContests, 3000);
  }
}

function selectContest(contest: ContestSummary) {
  selectedContest = contest;
  el<HTMLDivElement>("setup").style.display = "block";
  el<HTMLSpanElement>("setup-contest").textContent =
    `${contest.contest_id} (${contest.district})`;
  const totals = el<HTMLUListElement>("setup-totals");
  totals.innerHTML = "";
  for (const [name, votes] of Object.entries(contest.candidates)) {
    const li = document.createElement("li");
    li.textContent = `${name}: ${votes.toLocaleString()} reported`;
    totals.appendChild(li);
  }
}

function renderConsole() {
  el<HTMLDivElement>("console").style.display = state.sessionId ? "block" : "none";
  if (!state.sessionId) return;
  const alphaLabel = state.mode === "rlt"
    ? `${state.alpha} (per assertion: ${(state.alpha / Math.max(1, state.assertions.length)).toPrecision(3)}, Bonferroni)`
    : String(state.alpha);
  el<HTMLSpanElement>("session-meta").textContent =
    `session ${state.sessionId} · ${state.strategy} · ${state.mode} · alpha ${alphaLabel} · t=${Math.max(0, state.revision)}`;

  const pendingBox = el<HTMLDivElement>("pending");
  if (state.pendingBallot && !state.exhausted) {
    pendingBox.style.display = "block";
    el<HTMLSpanElement>("pending-id").textContent = state.pendingBallot;
  } else {
    pendingBox.style.display = "none";
  }

  const badges = el<HTMLDivElement>("badges");
  badges.innerHTML = "";
  for (const a of state.assertions) {
    const span = document.createElement("span");
    span.className = `badge ${a.status}`;
    const bound = a.lower !== null ? ` L=${a.lower.toFixed(4)}` : "";
    const upper = a.upper !== null && a.upper !== undefined ? ` U=${a.upper.toFixed(4)}` : "";
    span.textContent = `${a.assertion}: ${a.status}` +
      (a.stopped_at ? ` @${a.stopped_at}` : "") + bound + upper;
    badges.appendChild(span);
  }

  if (state.overallStatus === "certified") {
    setBanner(
      `All assertions certified after ${state.certifiedAt} ballots. ` +
        `You may stop here or continue sampling.`,
      "success",
    );
    el<HTMLDivElement>("continue-hint").style.display = "block";
  } else if (state.overallStatus === "exhausted") {
    setBanner("Population exhausted: full count reached without certification.", "info");
  }

  const voteButtons = el<HTMLDivElement>("vote-buttons");
  if (!voteButtons.childElementCount && selectedContest) {
    for (const token of [...Object.keys(selectedContest.candidates), "invalid"]) {
      const button = document.createElement("button");
      button.textContent = token;
      button.onclick = () => {
        pendingVote = token;
        el<HTMLSpanElement>("confirm-vote").textContent = token;
        el<HTMLDivElement>("confirm").style.display = "block";
      };
      voteButtons.appendChild(button);
    }
  }

  drawChart(el<HTMLCanvasElement>("chart"), state);
}

async function refreshState(sinceRevision: number) {
  if (!state.sessionId) return;
  const resp = await api.getState(state.sessionId, sinceRevision);
  state = applyState(state, resp);
  renderConsole();
}

async function startSession() {
  if (!selectedContest) return;
  const params = {
    alpha: Number(el<HTMLInputElement>("alpha").value),
    strategy: el<HTMLSelectElement>("strategy").value,
    mode: el<HTMLSelectElement>("mode").value,
    seed: Number(el<HTMLInputElement>("seed").value),
  };
  try {
    const created = await api.createSession(selectedContest.contest_id, params);
    state = applyState(
      emptyState(),
      await api.getState(created.session_id, 0),
    );
    el<HTMLDivElement>("vote-buttons").innerHTML = "";
    setBanner("");
    renderConsole();
    if (el<HTMLInputElement>("demo-feeder").checked) {
      setBanner("Demo feeder running: replaying the bundled manifest (simulation).", "info");
      const votes = await api.getManifest(selectedContest.contest_id);
      feeder = new DemoFeeder(api, votes, (s) => {
        state = s;
        renderConsole();
      }, 150);
      const outcome = await feeder.run(selectedContest.contest_id, params);
      state = outcome.state;
      renderConsole();
    }
  } catch (err) {
    setBanner(err instanceof ApiError ? err.detail : String(err), "error");
  }
}

async function confirmVote() {
  if (!state.sessionId || !state.pendingBallot || pendingVote === null) return;
  const revision = state.revision;
  try {
    await api.postBallot(state.sessionId, state.pendingBallot, pendingVote, revision);
    el<HTMLDivElement>("confirm").style.display = "none";
    pendingVote = null;
    await refreshState(revision);
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      setBanner(`Wrong ballot: ${err.detail}`, "error");
      await refreshState(0);
    } else {
      setBanner(err instanceof ApiError ? err.detail : String(err), "error");
    }
  }
}

async function downloadExport() {
  if (!state.sessionId) return;
  const csv = await api.exportCsv(state.sessionId);
  const blob = new Blob([csv], { type: "text/csv" });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = `trajectory_${state.sessionId}.csv`;
  a.click();
  URL.revokeObjectURL(a.href);
}

document.addEventListener("DOMContentLoaded", () => {
  loadContests();
  el<HTMLButtonElement>("start").onclick = startSession;
  el<HTMLButtonElement>("confirm-yes").onclick = confirmVote;
  el<HTMLButtonElement>("confirm-no").onclick = () => {
    pendingVote = null;
    el<HTMLDivElement>("confirm").style.display = "none";
  };
  el<HTMLButtonElement>("export").onclick = downloadExport;
  el<HTMLButtonElement>("stop-feeder").onclick = () => feeder?.stop();
});

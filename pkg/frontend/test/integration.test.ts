// End-to-end equivalence against the real service: the demo feeder must
// certify at the same ballot index as the command-line audit with the same
// seed, and the charted rows must equal the service's CSV export
// row-for-row.  Requires the python package to be installed (pip install -e
// from the repository root).

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { AuditApi } from "../src/api.js";
import { DemoFeeder } from "../src/feeder.js";
import { allRows } from "../src/state.js";

const PORT = 8765 + Math.floor(Math.random() * 500);
const BASE = `http://127.0.0.1:${PORT}`;
const SEED = 12;
const PYTHON = process.env.PYTHON ?? "python3";

let service: ChildProcess;

async function waitForService(timeoutMs = 20_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${BASE}/contests`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
  throw new Error("audit service did not come up");
}

beforeAll(async () => {
  service = spawn(
    PYTHON,
    ["-m", "auditseq.cli", "serve", "--host", "127.0.0.1", "--port", String(PORT)],
    { stdio: "ignore" },
  );
  await waitForService();
}, 30_000);

afterAll(() => {
  service?.kill();
});

describe("dashboard equivalence with the CLI", () => {
  it("demo feeder certifies at the CLI's ballot index and charts the export rows", async () => {
    const api = new AuditApi(BASE);
    const votes = await api.getManifest("demo-ward");

    // drive the UI path: server-drawn ballots, vote entry, state deltas
    const feeder = new DemoFeeder(api, votes);
    const outcome = await feeder.run("demo-ward", {
      alpha: 0.05,
      strategy: "sqkelly",
      seed: SEED,
    });
    expect(outcome.certifiedAt).not.toBeNull();
    expect(outcome.state.overallStatus).toBe("certified");

    // the same audit through the CLI, same seed, manifest replay
    const dir = mkdtempSync(join(tmpdir(), "auditseq-ui-"));
    const manifestCsv =
      "ballot_id,vote\n" +
      [...votes.entries()].map(([id, vote]) => `${id},${vote}`).join("\n") +
      "\n";
    const manifestPath = join(dir, "manifest.csv");
    writeFileSync(manifestPath, manifestCsv);
    const cli = spawnSync(
      PYTHON,
      [
        "-m", "auditseq.cli", "audit", "demo-ward",
        "--manifest", manifestPath,
        "--seed", String(SEED),
        "--out", join(dir, "out"),
      ],
      { encoding: "utf-8" },
    );
    expect(cli.status).toBe(0);
    const match = cli.stdout.match(/certified_at=(\d+)/);
    expect(match).not.toBeNull();
    expect(Number(match![1])).toBe(outcome.certifiedAt);

    // chart data equals the service export, row for row
    const sessionId = outcome.state.sessionId!;
    const csv = await api.exportCsv(sessionId);
    const lines = csv.trim().split("\n");
    expect(lines[0]).toBe("t,assertion,lower,p_value");
    const chartRows = allRows(outcome.state);
    expect(chartRows.length).toBe(lines.length - 1);
    lines.slice(1).forEach((line, i) => {
      const [t, assertion, lower, p] = line.split(",");
      expect(Number(t)).toBe(chartRows[i].t);
      expect(assertion).toBe(chartRows[i].assertion);
      expect(Number(lower)).toBe(chartRows[i].lower);
      expect(Number(p)).toBe(chartRows[i].p_value);
    });

    // the CLI's own trajectory file matches the service export byte-wise
    // up to row count (the CLI stops at certification, as the feeder does)
    const cliCsv = readFileSync(join(dir, "out", "trajectory.csv"), "utf-8");
    expect(cliCsv).toBe(csv);
  }, 120_000);
});

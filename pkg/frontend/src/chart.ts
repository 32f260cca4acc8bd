import type { DashboardState } from "./state.js";

const SERIES_COLORS = [
  "#2563eb", "#dc2626", "#059669", "#d97706", "#7c3aed", "#0891b2", "#be185d",
];

/**
 * Render the lower confidence sequences (and upper, in tally mode) on a
 * canvas: one polyline per assertion plus the 1/2 reference line the audit
 * must clear.
 */
export function drawChart(canvas: HTMLCanvasElement, state: DashboardState): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const w = canvas.width;
  const h = canvas.height;
  const pad = { left: 44, right: 10, top: 10, bottom: 26 };
  ctx.clearRect(0, 0, w, h);

  const series = [...state.trajectories.entries()];
  const maxT = Math.max(
    1,
    ...series.map(([, rows]) => (rows.length ? rows[rows.length - 1].t : 0)),
  );
  const xOf = (t: number) => pad.left + ((w - pad.left - pad.right) * t) / maxT;
  const yOf = (v: number) => h - pad.bottom - (h - pad.top - pad.bottom) * v;

  // frame and gridlines
  ctx.strokeStyle = "#cbd5e1";
  ctx.lineWidth = 1;
  ctx.strokeRect(pad.left, pad.top, w - pad.left - pad.right, h - pad.top - pad.bottom);
  ctx.fillStyle = "#475569";
  ctx.font = "11px sans-serif";
  for (const v of [0, 0.25, 0.5, 0.75, 1]) {
    const y = yOf(v);
    ctx.strokeStyle = v === 0.5 ? "#94a3b8" : "#eef2f7";
    ctx.beginPath();
    ctx.moveTo(pad.left, y);
    ctx.lineTo(w - pad.right, y);
    ctx.stroke();
    ctx.fillText(v.toFixed(2), 6, y + 4);
  }
  ctx.fillText(`t (of ${maxT})`, w / 2 - 20, h - 8);

  // the line every lower sequence must clear
  ctx.strokeStyle = "#0f172a";
  ctx.setLineDash([6, 4]);
  ctx.beginPath();
  ctx.moveTo(pad.left, yOf(0.5));
  ctx.lineTo(w - pad.right, yOf(0.5));
  ctx.stroke();
  ctx.setLineDash([]);

  series.forEach(([label, rows], idx) => {
    const color = SERIES_COLORS[idx % SERIES_COLORS.length];
    ctx.strokeStyle = color;
    ctx.lineWidth = 1.6;
    ctx.beginPath();
    rows.forEach((row, i) => {
      const x = xOf(row.t);
      const y = yOf(row.lower);
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
    if (state.mode === "rlt") {
      ctx.setLineDash([3, 3]);
      ctx.beginPath();
      rows.forEach((row, i) => {
        const x = xOf(row.t);
        const y = yOf(row.upper ?? 1);
        if (i === 0) ctx.moveTo(x, y);
        else ctx.lineTo(x, y);
      });
      ctx.stroke();
      ctx.setLineDash([]);
    }
    ctx.fillStyle = color;
    ctx.fillText(label, pad.left + 8, pad.top + 14 + idx * 14);
  });
}

import init, { simulate_roc, w_sweep, calibration_bins, optimal_weight } from "./pkg/docprobe_demo.js";

const $ = (id) => document.getElementById(id);
const canvas = $("plot");
const ctx = canvas.getContext("2d");
const PAD = 60;

function inputs() {
  return {
    p1: +$("p1").value,
    p2: +$("p2").value,
    frac: +$("frac").value,
    w: 10 ** +$("logw").value,
    docs: Math.max(10, Math.floor(+$("docs").value)),
    tests: Math.max(1, Math.floor(+$("tests").value)),
    seed: BigInt(Math.max(0, Math.floor(+$("seed").value))),
    bin: +$("bin").value,
  };
}

function refreshLabels() {
  for (const id of ["p1", "p2", "frac"]) document.querySelector(`output[for=${id}]`).textContent = $(id).value;
  document.querySelector("output[for=logw]").textContent = `w = ${(10 ** +$("logw").value).toPrecision(4)}`;
}

function guarded(fn) {
  return () => {
    $("error").textContent = "";
    try {
      fn();
    } catch (e) {
      $("error").textContent = String(e.message ?? e);
    }
  };
}

// Axes for x in [x0, x1] and y in [y0, y1]; returns a mapping to canvas pixels.
function axes(xLabel, yLabel, x0, x1, y0, y1, xTicks, fmtX = (v) => v.toFixed(1)) {
  const W = canvas.width, H = canvas.height;
  ctx.clearRect(0, 0, W, H);
  ctx.strokeStyle = "#999";
  ctx.fillStyle = "#333";
  ctx.font = "20px system-ui";
  ctx.lineWidth = 1;
  ctx.strokeRect(PAD, PAD / 2, W - PAD * 1.5, H - PAD * 1.5);
  const px = (x) => PAD + ((x - x0) / (x1 - x0)) * (W - PAD * 1.5);
  const py = (y) => H - PAD + ((y - y0) / (y1 - y0)) * -(H - PAD * 1.5);
  ctx.textAlign = "center";
  for (const t of xTicks) ctx.fillText(fmtX(t), px(t), H - PAD + 24);
  ctx.fillText(xLabel, W / 2, H - 6);
  ctx.textAlign = "right";
  for (let i = 0; i <= 4; i++) {
    const y = y0 + ((y1 - y0) * i) / 4;
    ctx.fillText(y.toFixed(2), PAD - 6, py(y) + 6);
  }
  ctx.save();
  ctx.translate(16, H / 2);
  ctx.rotate(-Math.PI / 2);
  ctx.textAlign = "center";
  ctx.fillText(yLabel, 0, 0);
  ctx.restore();
  return { px, py };
}

function line(points, px, py, color, width = 3) {
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.beginPath();
  points.forEach(([x, y], i) => (i ? ctx.lineTo(px(x), py(y)) : ctx.moveTo(px(x), py(y))));
  ctx.stroke();
}

function table(headers, rows) {
  const head = `<tr>${headers.map((h) => `<th>${h}</th>`).join("")}</tr>`;
  const body = rows.map((r) => `<tr>${r.map((c) => `<td>${c}</td>`).join("")}</tr>`).join("");
  $("table").innerHTML = `<table>${head}${body}</table>`;
}

const pct = (v) => (v == null ? "–" : (100 * v).toFixed(1) + "%");

function showRoc() {
  const s = inputs();
  const r = JSON.parse(simulate_roc(s.p1, s.p2, s.frac, s.docs, s.tests, s.seed, s.w));
  const { px, py } = axes("false positive rate", "true positive rate", 0, 1, 0, 1, [0, 0.25, 0.5, 0.75, 1], (v) => v.toFixed(2));
  line([[0, 0], [1, 1]], px, py, "#ccc", 1);
  line(r.curve, px, py, "#1f6feb");
  $("summary").textContent =
    `w = ${r.w.toPrecision(4)}   optimal w = ${r.optimal_w == null ? "n/a" : r.optimal_w.toFixed(4)}\n` +
    `accurate ${r.n_accurate}, inaccurate ${r.n_inaccurate}\n` +
    `ROC-AUC ${r.auc.toFixed(4)}   AP ${r.ap.toFixed(4)}`;
  $("table").innerHTML = "";
}

function showSweep() {
  const s = inputs();
  const r = JSON.parse(w_sweep(s.p1, s.p2, s.frac, s.docs, s.tests, s.seed, 2));
  const pts = r.points.map((p) => [Math.log10(p.w), p.auc]);
  const aps = r.points.map((p) => [Math.log10(p.w), p.ap]);
  const ys = r.points.flatMap((p) => [p.auc, p.ap]);
  const lo = Math.max(0, Math.floor(Math.min(...ys) * 20) / 20);
  const hi = Math.min(1, Math.ceil(Math.max(...ys) * 20) / 20 + 0.01);
  const { px, py } = axes("w (log scale)", "metric", -2, 2, lo, hi, [-2, -1, 0, 1, 2], (v) => `${10 ** v}`);
  line(pts, px, py, "#1f6feb");
  line(aps, px, py, "#d97706");
  if (r.optimal_w != null && r.optimal_w >= 0.01 && r.optimal_w <= 100) {
    const x = Math.log10(r.optimal_w);
    ctx.setLineDash([6, 6]);
    line([[x, lo], [x, hi]], px, py, "#16a34a", 2);
    ctx.setLineDash([]);
  }
  const best = r.points.reduce((a, b) => (b.auc > a.auc ? b : a));
  $("summary").textContent =
    `blue: ROC-AUC, orange: AP, green: optimal w\n` +
    `best AUC ${best.auc.toFixed(4)} at w = ${best.w.toPrecision(3)}\n` +
    `optimal w = ${r.optimal_w == null ? "n/a" : r.optimal_w.toFixed(4)}`;
  $("table").innerHTML = "";
}

function showCalibration() {
  const s = inputs();
  const r = JSON.parse(calibration_bins(s.p1, s.p2, s.frac, s.docs, s.tests, s.seed, s.w, s.bin));
  const { px, py } = axes("normalized score", "accuracy", 0, 1, 0, 1, [0, 0.2, 0.4, 0.6, 0.8, 1]);
  for (const b of r.bins) {
    if (b.accuracy == null) continue;
    const [a, z] = b.bin_range;
    ctx.fillStyle = "#93c5fd";
    ctx.fillRect(px(a) + 2, py(b.accuracy), px(z) - px(a) - 4, py(0) - py(b.accuracy));
    const [lo, hi] = b.ci95;
    line([[(a + z) / 2, lo], [(a + z) / 2, hi]], px, py, "#1e3a8a", 2);
  }
  $("summary").textContent = `w = ${s.w.toPrecision(4)}; bars: accuracy per bin, whiskers: 95% Wilson interval`;
  table(
    ["cutoff", "inaccurate removed", "accurate retained"],
    r.thresholds.map((t) => [t.cutoff.toFixed(1), pct(t.inaccurate_removed), pct(t.accurate_retained)]),
  );
}

function setOptimal() {
  const s = inputs();
  $("logw").value = Math.min(2, Math.max(-2, Math.log10(optimal_weight(s.p1, s.p2))));
  refreshLabels();
  showRoc();
}

await init();
for (const el of document.querySelectorAll("input")) el.addEventListener("input", refreshLabels);
$("roc").addEventListener("click", guarded(showRoc));
$("sweep").addEventListener("click", guarded(showSweep));
$("calib").addEventListener("click", guarded(showCalibration));
$("wopt").addEventListener("click", guarded(setOptimal));
refreshLabels();
guarded(showRoc)();

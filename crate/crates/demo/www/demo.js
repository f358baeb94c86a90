import init, { segment_json, scores_json, train_json } from "./pkg/osg_demo.js";

const TRUTH = "#2a9d3a";
const PREDICTED = "#e07b00";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function call(fn, ...args) {
  const result = JSON.parse(fn(...args));
  if (result.error) throw new Error(result.error);
  return result;
}

function show(id, text, isError = false) {
  $(id).textContent = text;
  $(id).className = isError ? "out error" : "out";
}

function drawMatrix(canvas, s) {
  const ctx = canvas.getContext("2d");
  const cell = canvas.width / s.n;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  for (let i = 0; i < s.n; i++) {
    for (let j = 0; j < s.n; j++) {
      const v = Math.round(255 * s.distances[i * s.n + j]);
      ctx.fillStyle = `rgb(${v},${v},${v})`;
      ctx.fillRect(j * cell, i * cell, cell + 0.5, cell + 0.5);
    }
  }
  const ticks = (bounds, color, inset) => {
    ctx.strokeStyle = color;
    ctx.lineWidth = 2;
    let start = 0;
    for (const b of bounds) {
      ctx.strokeRect(start * cell + inset, start * cell + inset, (b - start) * cell - 2 * inset, (b - start) * cell - 2 * inset);
      start = b;
    }
  };
  ticks(s.truth, TRUTH, 1);
  ticks(s.predicted, PREDICTED, 4);
}

function axes(ctx, w, h) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.lineWidth = 1;
  ctx.beginPath();
  ctx.moveTo(30, 10);
  ctx.lineTo(30, h - 20);
  ctx.lineTo(w - 10, h - 20);
  ctx.stroke();
}

function drawLine(canvas, values, mark) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  axes(ctx, w, h);
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const x = (i) => 30 + (i / Math.max(values.length - 1, 1)) * (w - 45);
  const y = (v) => h - 20 - ((v - lo) / (hi - lo || 1)) * (h - 35);
  ctx.strokeStyle = "#246";
  ctx.beginPath();
  values.forEach((v, i) => (i ? ctx.lineTo(x(i), y(v)) : ctx.moveTo(x(i), y(v))));
  ctx.stroke();
  if (mark !== undefined) {
    ctx.fillStyle = PREDICTED;
    ctx.beginPath();
    ctx.arc(x(mark), y(values[mark]), 4, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function drawBars(canvas, rows, truth) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  axes(ctx, w, h);
  const n = rows[0].length;
  const hi = Math.max(...rows.flat()) || 1;
  const step = (w - 45) / n;
  ctx.fillStyle = TRUTH;
  for (const b of truth) ctx.fillRect(30 + (b - 1) * step, h - 18, step, 6);
  rows.forEach((row, r) => {
    const shade = rows.length === 1 ? 0 : Math.round(200 * (1 - r / (rows.length - 1)));
    ctx.strokeStyle = `rgb(${shade},${shade},${255 - shade / 2})`;
    ctx.beginPath();
    row.forEach((v, i) => {
      const px = 30 + (i + 0.5) * step;
      const py = h - 20 - (v / hi) * (h - 35);
      i ? ctx.lineTo(px, py) : ctx.moveTo(px, py);
    });
    ctx.stroke();
  });
}

function runSegment() {
  try {
    const s = call(segment_json, num("scenes"), num("sigma"), num("seed"), num("k"));
    drawMatrix($("matrix"), s);
    // elbow index k marks the last kept singular value
    drawLine($("spectrum"), s.log_singular_values, s.estimated_k - 1);
    show("segment-out",
      `shots ${s.n}, K ${s.k} (elbow estimate ${s.estimated_k})\n` +
      `true ends      ${s.truth.join(" ")}\npredicted ends ${s.predicted.join(" ")}\nF = ${s.f_score.toFixed(3)}`);
  } catch (e) {
    show("segment-out", e.message, true);
  }
}

function runScores() {
  try {
    const s = call(scores_json, num("scenes"), num("sigma"), num("seed"));
    drawBars($("scores"), [s.t], s.truth);
  } catch (e) {
    show("segment-out", e.message, true);
  }
}

function runTrain() {
  show("train-out", "training...");
  // let the message paint before the blocking call
  setTimeout(() => {
    try {
      const t = call(train_json, $("loss").value, num("scenes"), num("train-sigma"), num("seed"), num("epochs"));
      if (t.traces.length) drawBars($("trace"), t.traces, t.trace_truth);
      else $("trace").getContext("2d").clearRect(0, 0, 720, 200);
      if (t.epoch_losses.length) drawLine($("losses"), t.epoch_losses);
      show("train-out",
        `epochs run ${t.epoch_losses.length}\n` +
        `held-out mean F: ${t.f_before.toFixed(3)} untrained -> ${t.f_after.toFixed(3)} trained`);
    } catch (e) {
      show("train-out", e.message, true);
    }
  }, 10);
}

await init();
$("run-segment").onclick = runSegment;
$("run-scores").onclick = runScores;
$("run-train").onclick = runTrain;
runSegment();
runScores();

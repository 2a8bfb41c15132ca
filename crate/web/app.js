// Vanilla-JS glue over the wasm bindings. Build ./pkg with web/build.sh.
import init, {
  synth_image_rgba,
  class_name,
  AugmentExplorer,
  LiveTrainer,
} from "./pkg/paxray_demo.js";

const $ = (id) => document.getElementById(id);

function paintRgba(canvas, rgba, side) {
  canvas.width = side;
  canvas.height = side;
  const ctx = canvas.getContext("2d");
  const img = new ImageData(new Uint8ClampedArray(rgba), side, side);
  ctx.putImageData(img, 0, 0);
}

// --- 1. gallery ------------------------------------------------------------

const GALLERY_SIDE = 48;

function renderGallery() {
  const cls = Number($("g-class").value);
  const seed = BigInt($("g-seed").value || 0);
  const grid = $("g-grid");
  grid.replaceChildren();
  for (let i = 0; i < 12; i++) {
    const fig = document.createElement("figure");
    const canvas = document.createElement("canvas");
    canvas.className = "px";
    canvas.style.width = "72px";
    canvas.style.height = "72px";
    paintRgba(canvas, synth_image_rgba(cls, GALLERY_SIDE, seed, i), GALLERY_SIDE);
    const cap = document.createElement("figcaption");
    cap.textContent = `${class_name(cls)} #${i}`;
    fig.append(canvas, cap);
    grid.append(fig);
  }
}
$("g-regen").onclick = renderGallery;
$("g-class").onchange = renderGallery;

// --- 2. augmentation explorer ----------------------------------------------

const EXPLORER_SIDE = 96;
let explorer;

function explorerParams() {
  return {
    hflip: $("a-hflip").checked,
    vflip: $("a-vflip").checked,
    rot: Number($("a-rot").value),
    shear: Number($("a-shear").value),
    zoom: Number($("a-zoom").value),
    sx: Number($("a-sx").value),
    sy: Number($("a-sy").value),
    ch: Number($("a-ch").value),
  };
}

function renderExplorer() {
  const p = explorerParams();
  $("v-rot").textContent = p.rot.toFixed(0);
  $("v-shear").textContent = p.shear.toFixed(2);
  $("v-zoom").textContent = p.zoom.toFixed(2);
  $("v-sx").textContent = p.sx.toFixed(2);
  $("v-sy").textContent = p.sy.toFixed(2);
  $("v-ch").textContent = p.ch.toFixed(2);
  const rgba = explorer.transformed_rgba(
    p.hflip, p.vflip, p.rot, p.shear, p.zoom, p.sx, p.sy, p.ch, p.ch, p.ch,
  );
  paintRgba($("a-out"), rgba, EXPLORER_SIDE);
}

let sampleIndex = 0;
function sampleDraw() {
  const draw = JSON.parse(explorer.random_params_json(7n, sampleIndex++));
  $("a-hflip").checked = draw.hflip;
  $("a-vflip").checked = draw.vflip;
  $("a-rot").value = draw.rotation_deg;
  $("a-shear").value = draw.shear_deg_ccw;
  $("a-zoom").value = draw.zoom;
  $("a-sx").value = draw.shift_x_frac;
  $("a-sy").value = draw.shift_y_frac;
  $("a-ch").value = draw.channel_shift[0];
  renderExplorer();
}

function resetExplorer() {
  $("a-hflip").checked = false;
  $("a-vflip").checked = false;
  $("a-rot").value = 0;
  $("a-shear").value = 0;
  $("a-zoom").value = 1;
  $("a-sx").value = 0;
  $("a-sy").value = 0;
  $("a-ch").value = 0;
  renderExplorer();
}

// --- 3. live training ------------------------------------------------------

const TRAIN_SIDE = 24;
const PER_CLASS = 8;
let trainer;
let running = false;
let losses = [];
let sampleCanvases = [];

function resetTrainer() {
  running = false;
  $("t-toggle").textContent = "start training";
  trainer = new LiveTrainer(11n, PER_CLASS, TRAIN_SIDE, 8, 0.002);
  losses = [];
  $("t-epoch").textContent = "0";
  $("t-loss").textContent = "—";
  $("t-acc").textContent = "—";
  buildSampleGrid();
  refreshPredictions();
  drawChart();
}

function buildSampleGrid() {
  const grid = $("t-grid");
  grid.replaceChildren();
  sampleCanvases = [];
  for (let i = 0; i < trainer.sample_count(); i++) {
    const fig = document.createElement("figure");
    const canvas = document.createElement("canvas");
    canvas.className = "px";
    canvas.style.width = "72px";
    canvas.style.height = "72px";
    paintRgba(canvas, trainer.sample_rgba(i), TRAIN_SIDE);
    const cap = document.createElement("figcaption");
    cap.textContent = class_name(trainer.sample_label(i));
    fig.append(canvas, cap);
    grid.append(fig);
    sampleCanvases.push(canvas);
  }
}

function refreshPredictions() {
  for (let i = 0; i < sampleCanvases.length; i++) {
    const p = JSON.parse(trainer.predict_json(i));
    sampleCanvases[i].className = "px " + (p.predicted === p.truth ? "good" : "bad");
  }
  const ev = JSON.parse(trainer.evaluate_json());
  if (ev.accuracy !== undefined) {
    $("t-acc").textContent = (100 * ev.accuracy).toFixed(1) + "%";
  }
}

function drawChart() {
  const canvas = $("t-chart");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (losses.length < 2) return;
  const max = Math.max(...losses);
  const pad = 8;
  ctx.strokeStyle = "#7ec8ff";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  losses.forEach((l, i) => {
    const x = pad + (i / (losses.length - 1)) * (canvas.width - 2 * pad);
    const y = canvas.height - pad - (l / max) * (canvas.height - 2 * pad);
    i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
  });
  ctx.stroke();
  ctx.fillStyle = "#9aa1ad";
  ctx.font = "11px system-ui";
  ctx.fillText(`loss, epochs 1..${losses.length} (max ${max.toFixed(3)})`, pad + 2, 12);
}

function trainingFrame() {
  if (!running) return;
  const result = JSON.parse(trainer.train_epoch());
  if (result.loss !== undefined) {
    losses.push(result.loss);
    $("t-epoch").textContent = String(result.epoch);
    $("t-loss").textContent = result.loss.toFixed(4);
  }
  if (losses.length % 2 === 0) refreshPredictions();
  drawChart();
  requestAnimationFrame(trainingFrame);
}

// --- boot -------------------------------------------------------------------

await init();
renderGallery();
explorer = new AugmentExplorer(0, EXPLORER_SIDE, 3n);
paintRgba($("a-orig"), explorer.original_rgba(), EXPLORER_SIDE);
renderExplorer();
for (const id of ["a-rot", "a-shear", "a-zoom", "a-sx", "a-sy", "a-ch", "a-hflip", "a-vflip"]) {
  $(id).oninput = renderExplorer;
}
$("a-sample").onclick = sampleDraw;
$("a-reset").onclick = resetExplorer;
$("t-toggle").onclick = () => {
  running = !running;
  $("t-toggle").textContent = running ? "pause" : "resume";
  if (running) requestAnimationFrame(trainingFrame);
};
$("t-reset").onclick = resetTrainer;
resetTrainer();

// Built with: wasm-pack build crates/wasm --target web --out-dir www/pkg
import init, { Simulation, upsilon_curve } from "./pkg/tumor_etd_wasm.js";

const $ = (id) => document.getElementById(id);
let sim = null;
let running = false;

function viridisish(v) {
  // Dark blue to yellow.
  const r = Math.round(255 * Math.min(1, Math.max(0, 1.6 * v - 0.4)));
  const g = Math.round(255 * Math.min(1, Math.max(0, v * 0.9 + 0.05)));
  const b = Math.round(255 * Math.min(1, Math.max(0, 0.55 - 0.5 * v + 0.4 * Math.sin(3 * v))));
  return [r, g, b];
}

function drawField() {
  const n = sim.nodes_per_axis();
  const data = sim.field($("which").value);
  let lo = Infinity, hi = -Infinity;
  for (const v of data) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  const span = hi > lo ? hi - lo : 1;
  const img = new ImageData(n, n);
  for (let j = 0; j < n; j++) {
    for (let i = 0; i < n; i++) {
      // Flip y so that +y points up.
      const [r, g, b] = viridisish((data[i + n * j] - lo) / span);
      const o = 4 * (i + n * (n - 1 - j));
      img.data.set([r, g, b, 255], o);
    }
  }
  const tmp = new OffscreenCanvas(n, n);
  tmp.getContext("2d").putImageData(img, 0, 0);
  const ctx = $("field").getContext("2d");
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(tmp, 0, 0, 320, 320);
  const s = JSON.parse(sim.stats());
  const m = s.monitor;
  $("stats").textContent =
    `t = ${m.t.toFixed(3)}  range [${lo.toExponential(3)}, ${hi.toExponential(3)}]\n` +
    `max phi_T ${m.phi_t_max.toFixed(4)}  max phi_N ${m.phi_n_max.toFixed(4)}  min theta ${m.theta_min.toFixed(4)}\n` +
    `|psi_sigma| ${m.psi_sigma_norm.toFixed(12)}  |psi_M| ${m.psi_m_norm.toFixed(12)}\n` +
    `breaches: ${s.breaches}\n` + s.recent.join("\n");
}

function drawCurves() {
  const xmax = Math.max(0.1, Number($("xmax").value) || 10);
  const ctx = $("curves").getContext("2d");
  ctx.clearRect(0, 0, 320, 320);
  const colors = ["#1f77b4", "#d62728", "#2ca02c"];
  for (let i = 0; i < 3; i++) {
    const ys = upsilon_curve(i, xmax, 200);
    ctx.strokeStyle = colors[i];
    ctx.beginPath();
    ys.forEach((y, k) => {
      const px = (k / (ys.length - 1)) * 310 + 5;
      const py = 315 - y * 300;
      k === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py);
    });
    ctx.stroke();
  }
}

function reset() {
  running = false;
  $("run").textContent = "run";
  sim = new Simulation($("scenario").value, $("preset").value, Number($("n").value), 1e-3);
  drawField();
}

function loop() {
  if (!running) return;
  try {
    sim.step(10);
  } catch (e) {
    running = false;
    $("stats").textContent += `\nstopped: ${e}`;
    return;
  }
  drawField();
  requestAnimationFrame(loop);
}

await init();
$("reset").onclick = reset;
$("which").onchange = drawField;
$("xmax").onchange = drawCurves;
$("run").onclick = () => {
  running = !running;
  $("run").textContent = running ? "pause" : "run";
  loop();
};
$("inject").onclick = () => {
  const found = sim.inject_nutrient(1.5);
  drawField();
  $("stats").textContent += `\ninjected psi_sigma = 1.5 at the center: ${found.length} violation(s)\n` + found.join("\n");
};
reset();
drawCurves();

// Build with: wasm-pack build crates/web --target web --out-dir www/pkg
import init, { tabular_convergence, selection_oracle, cartpole_selection } from "./pkg/adaqn_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function plot(canvas, xs, series, logScale) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const f = logScale ? (v) => Math.log10(Math.max(v, 1e-12)) : (v) => v;
  const all = series.flatMap((s) => s.values.map(f));
  const lo = Math.min(...all), hi = Math.max(...all);
  const x0 = xs[0], x1 = xs[xs.length - 1];
  const px = (x) => 40 + ((x - x0) / (x1 - x0 || 1)) * (w - 50);
  const py = (v) => h - 20 - ((f(v) - lo) / (hi - lo || 1)) * (h - 30);
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.values.forEach((v, i) => (i ? ctx.lineTo(px(xs[i]), py(v)) : ctx.moveTo(px(xs[i]), py(v))));
    ctx.stroke();
  }
  ctx.fillStyle = "#555";
  ctx.fillText(logScale ? `1e${hi.toFixed(1)}` : hi.toFixed(1), 2, 12);
  ctx.fillText(logScale ? `1e${lo.toFixed(1)}` : lo.toFixed(1), 2, h - 22);
}

function guarded(out, fn) {
  try {
    fn();
    $(out).classList.remove("bad");
  } catch (e) {
    $(out).textContent = String(e);
    $(out).classList.add("bad");
  }
}

await init();

$("tab-run").onclick = () => guarded("tab-out", () => {
  const r = JSON.parse(tabular_convergence(num("tab-seed"), num("tab-updates"), num("tab-members")));
  plot($("tab-plot"), r.steps, [{ values: r.errors, color: "#1f5fa8" }], true);
  $("tab-out").textContent = `final sup-norm error ${r.final_error.toExponential(3)}, target changed ${r.psi_changes} times`;
});

$("orc-run").onclick = () => guarded("orc-out", () => {
  const r = JSON.parse(selection_oracle(num("orc-seed"), num("orc-members")));
  const rows = r.empirical_losses.map((l, k) => `  net ${k}: empirical ${l.toFixed(4)}   true ${r.true_errors[k].toFixed(6)}`);
  $("orc-out").textContent = [...rows, `argmin empirical ${r.empirical_argmin}, argmin true ${r.true_argmin}: ${r.agree ? "agree" : "DISAGREE"}`].join("\n");
});

$("cp-run").onclick = () => guarded("cp-out", () => {
  const r = JSON.parse(cartpole_selection(num("cp-seed"), num("cp-steps"), $("cp-passive").checked));
  plot($("cp-plot"), r.steps, [{ values: r.returns, color: "#a83b1f" }], false);
  const arch = r.architectures.map((a) => `(${a.join(",")})`);
  $("cp-out").textContent = arch
    .map((a, k) => `${a.padEnd(10)} target ${String(r.target_counts[k]).padStart(4)}   acted ${r.behavior_counts[k]}`)
    .concat(`behavior entropy ${r.behavior_entropy.toFixed(3)} nats`)
    .join("\n");
});

import init, { fhnSmoothing, lvStepFit, spectrum } from "./pkg/sepode_wasm.js";

const COLORS = ["#1f77b4", "#d62728"];

function bounds(series) {
  let [x0, x1, y0, y1] = [Infinity, -Infinity, Infinity, -Infinity];
  for (const s of series) {
    for (const t of s.t) { x0 = Math.min(x0, t); x1 = Math.max(x1, t); }
    for (const comp of s.x) for (const v of comp) { y0 = Math.min(y0, v); y1 = Math.max(y1, v); }
  }
  const pad = 0.05 * (y1 - y0 || 1);
  return { x0, x1, y0: y0 - pad, y1: y1 + pad };
}

// layers: [{ series, style: "dots" | "line" | "dash" | "step" }]
function plot(canvas, layers) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const b = bounds(layers.map((l) => l.series).filter((s) => s.t.length));
  const px = (t) => 30 + ((t - b.x0) / (b.x1 - b.x0)) * (w - 40);
  const py = (v) => h - 20 - ((v - b.y0) / (b.y1 - b.y0)) * (h - 30);
  ctx.fillStyle = "#666";
  ctx.fillText(b.y1.toFixed(2), 2, 12);
  ctx.fillText(b.y0.toFixed(2), 2, h - 22);
  ctx.fillText(b.x1.toFixed(1), w - 30, h - 5);
  for (const { series, style } of layers) {
    series.x.forEach((comp, k) => {
      ctx.strokeStyle = ctx.fillStyle = COLORS[k % COLORS.length];
      ctx.globalAlpha = style === "dots" ? 0.45 : 1;
      ctx.setLineDash(style === "dash" ? [6, 4] : []);
      ctx.lineWidth = style === "line" ? 1 : 2;
      if (style === "dots") {
        comp.forEach((v, i) => ctx.fillRect(px(series.t[i]) - 1.5, py(v) - 1.5, 3, 3));
        return;
      }
      ctx.beginPath();
      comp.forEach((v, i) => {
        const x = px(series.t[i]);
        if (i === 0) ctx.moveTo(x, py(v));
        else if (style === "step") { ctx.lineTo(x, py(comp[i - 1])); ctx.lineTo(x, py(v)); }
        else ctx.lineTo(x, py(v));
      });
      ctx.stroke();
    });
  }
  ctx.globalAlpha = 1;
  ctx.setLineDash([]);
}

const fmt = (xs) => xs.map((v) => v.toFixed(4)).join(", ");

function bindOutputs(ids, fn) {
  for (const id of ids) {
    const el = document.getElementById(id);
    const out = document.getElementById(id + "-v");
    const update = () => { if (out) out.textContent = el.value; fn(); };
    el.addEventListener("input", update);
  }
  for (const id of ids) {
    const out = document.getElementById(id + "-v");
    if (out) out.textContent = document.getElementById(id).value;
  }
  fn();
}

function run(outId, body) {
  const out = document.getElementById(outId);
  try { body(out); } catch (e) { out.textContent = "error: " + e; }
}

function drawFhn() {
  run("fhn-out", (out) => {
    const v = JSON.parse(fhnSmoothing(+bw.value, +document.getElementById("fhn-sd").value,
      +document.getElementById("fhn-seed").value));
    plot(document.getElementById("fhn"), [
      { series: v.data, style: "dots" },
      { series: v.truth, style: "line" },
      { series: v.smooth, style: "dash" },
    ]);
    out.textContent = `dots: data, thin: truth, dashed: smoothed\n` +
      `nu_hat (alpha, beta, gamma) = ${v.nu_hat ? fmt(v.nu_hat) : "n/a"}   truth 0.34, 0.2, 3`;
  });
}

function drawLv() {
  run("lv-out", (out) => {
    const v = JSON.parse(lvStepFit(+document.getElementById("j").value, +document.getElementById("lv-sd").value,
      +document.getElementById("lv-seed").value));
    plot(document.getElementById("lv"), [
      { series: v.means, style: "step" },
      { series: v.truth, style: "line" },
      { series: v.refit, style: "dash" },
    ]);
    out.textContent = `thick steps: replicate means, thin: truth, dashed: solution at the estimates\n` +
      `theta_hat = ${fmt(v.theta_hat)}   xi_hat = ${fmt(v.xi_hat)}   truth 0.5 x4, (1, 0.5)`;
  });
}

function drawSpectrum() {
  run("spec-out", (out) => {
    const v = JSON.parse(spectrum(document.getElementById("preset").value, +document.getElementById("horizon").value));
    const canvas = document.getElementById("spec");
    const ctx = canvas.getContext("2d");
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const logs = v.eigenvalues.map((e) => Math.log10(Math.max(e, 1e-18)));
    const top = Math.max(...logs, 0) + 1;
    const bottom = -18;
    const width = (canvas.width - 40) / logs.length;
    logs.forEach((l, i) => {
      const hgt = ((l - bottom) / (top - bottom)) * (canvas.height - 30);
      ctx.fillStyle = l < Math.log10(1e-10 * Math.max(...v.eigenvalues)) ? "#d62728" : "#1f77b4";
      ctx.fillRect(30 + i * width + 8, canvas.height - 20 - hgt, width - 16, hgt);
      ctx.fillStyle = "#333";
      ctx.fillText(v.eigenvalues[i].toExponential(2), 30 + i * width + 10, canvas.height - 5);
    });
    const nulls = v.null_space.map((n) => "  [" + fmt(n) + "]").join("\n");
    out.textContent = `${v.model}: rank ${v.rank}, rcond ${v.rcond.toExponential(2)}, ` +
      (v.identifiable ? "identifiable" : "NOT identifiable") + (nulls ? `\nnull space:\n${nulls}` : "");
  });
}

const bw = document.getElementById("bw");

await init();
bindOutputs(["bw", "fhn-sd", "fhn-seed"], drawFhn);
bindOutputs(["j", "lv-sd", "lv-seed"], drawLv);
bindOutputs(["preset", "horizon"], drawSpectrum);

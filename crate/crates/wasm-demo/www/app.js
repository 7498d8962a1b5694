import init, { mixing_curves, certify_density, run_chains } from "./pkg/scalemix_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function guard(fn) {
  return () => {
    $("status").textContent = "";
    try {
      fn();
    } catch (e) {
      $("status").textContent = String(e);
    }
  };
}

// series: [{x, y, color}]; log-scaled x when logx is set
function plot(canvas, series, { logx = false, title = "" } = {}) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, pad = 36;
  ctx.clearRect(0, 0, W, H);
  const tx = (v) => (logx ? Math.log10(v) : v);
  const xs = series.flatMap((s) => s.x.map(tx));
  const ys = series.flatMap((s) => s.y).filter(Number.isFinite);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(0, ...ys), Math.max(...ys)];
  if (y1 === y0) y1 = y0 + 1;
  const px = (v) => pad + ((tx(v) - x0) / (x1 - x0 || 1)) * (W - 2 * pad);
  const py = (v) => H - pad - ((v - y0) / (y1 - y0)) * (H - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, W - 2 * pad, H - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  ctx.fillText(title, pad, pad - 8);
  ctx.fillText(y1.toPrecision(3), 2, pad + 4);
  ctx.fillText(y0.toPrecision(3), 2, H - pad);
  ctx.fillText((logx ? 10 ** x0 : x0).toPrecision(3), pad, H - pad + 14);
  ctx.fillText((logx ? 10 ** x1 : x1).toPrecision(3), W - pad - 30, H - pad + 14);
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.x.forEach((x, i) => {
      const y = s.y[i];
      if (!Number.isFinite(y)) return;
      i === 0 ? ctx.moveTo(px(x), py(y)) : ctx.lineTo(px(x), py(y));
    });
    ctx.stroke();
  }
}

const plotCurves = guard(() => {
  const c = JSON.parse(mixing_curves($("spec").value, num("cd"), 1e-3, num("umax"), num("rmax"), 200));
  plot($("hcanvas"), [{ x: c.u, y: c.h, color: "#1f77b4" }], { logx: true, title: c.mixing });
  plot($("fcanvas"), [
    { x: c.r, y: c.normal, color: "#888" },
    { x: c.r, y: c.f, color: "#d62728" },
  ], { title: "density along a ray" });
});

const certify = guard(() => {
  const c = JSON.parse(certify_density($("spec").value, num("n"), num("p"), num("d"), num("a")));
  $("report").textContent = c.report;
});

const runChains = guard(() => {
  $("chains").textContent = "running...";
  const r = JSON.parse(run_chains($("spec").value, $("y").value, $("x").value,
    num("ca"), num("iters"), num("burn"), num("seed"), num("lag")));
  const idx = (v) => v.map((_, i) => i);
  plot($("trace"), [
    { x: idx(r.sigma.da), y: r.sigma.da, color: "#1f77b4" },
    { x: idx(r.sigma.pxda), y: r.sigma.pxda, color: "#ff7f0e" },
  ], { title: "Sigma[1,1] trace (thinned for display)" });
  const lags = r.autocorr_beta.lags;
  plot($("acf"), [
    { x: lags.map((l) => l.lag), y: lags.map((l) => l.da), color: "#1f77b4" },
    { x: lags.map((l) => l.lag), y: lags.map((l) => l.pxda), color: "#ff7f0e" },
  ], { title: "beta[1,1] autocorrelation by lag" });
  const fmt = (rep) => rep.lags.map((l) =>
    `${String(l.lag).padStart(4)} ${l.da.toFixed(4).padStart(8)} ${l.pxda.toFixed(4).padStart(8)}`).join("\n");
  const prop = r.propriety.map((e) => `[${e.outcome}] ${e.name}: ${e.detail}`).join("\n");
  $("chains").textContent =
    `${prop}\n\nretained draws: ${r.retained}\n\nbeta[1,1]\n lag       DA    PX-DA\n${fmt(r.autocorr_beta)}` +
    `\n\nSigma[1,1]\n lag       DA    PX-DA\n${fmt(r.autocorr_sigma)}`;
});

await init();
$("spec").value = $("preset").value;
$("preset").addEventListener("change", () => { $("spec").value = $("preset").value; });
$("plot").addEventListener("click", plotCurves);
$("certify").addEventListener("click", certify);
$("run").addEventListener("click", runChains);
plotCurves();

import init, { maskRgba, maskStats, blendRgba, gaussianRoc } from "./pkg/starlk_wasm.js";

const $ = (id) => document.getElementById(id);

function paint(canvas, rgba, side) {
  const img = new ImageData(new Uint8ClampedArray(rgba), side, side);
  const tmp = new OffscreenCanvas(side, side);
  tmp.getContext("2d").putImageData(img, 0, 0);
  const ctx = canvas.getContext("2d");
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(tmp, 0, 0, canvas.width, canvas.height);
}

function guarded(fn) {
  return () => {
    try {
      $("error").textContent = "";
      fn();
    } catch (e) {
      $("error").textContent = String(e.message ?? e);
    }
  };
}

function band() {
  return [parseFloat($("lo").value), parseFloat($("hi").value)];
}

const updateMask = guarded(() => {
  const lambda = parseFloat($("lambda").value);
  const side = parseInt($("side").value, 10);
  const [lo, hi] = band();
  $("lambda-v").textContent = lambda.toFixed(2);
  paint($("mask"), maskRgba(lambda, side), side);
  const s = JSON.parse(maskStats(lambda, side, lo, hi));
  $("stats").textContent =
    `lambda      ${s.lambda.toFixed(4)}\n` +
    `lambda_hat  ${s.lambda_hat.toFixed(6)}\n` +
    `G range     ${s.min.toFixed(4)} .. ${s.max.toFixed(4)}\n` +
    `path        ${s.path}`;
  updateBlend();
});

const updateBlend = guarded(() => {
  const lambda = parseFloat($("lambda").value);
  const side = parseInt($("side").value, 10);
  const [lo, hi] = band();
  const seed = Math.max(0, parseInt($("seed").value, 10) || 0);
  paint($("blend"), blendRgba(lambda, side, lo, hi, seed), side);
});

const updateRoc = guarded(() => {
  const sep = parseFloat($("sep").value);
  const n = parseInt($("n").value, 10);
  $("sep-v").textContent = sep.toFixed(1);
  const r = JSON.parse(gaussianRoc(sep, n, 401, 1));
  const c = $("roc");
  const ctx = c.getContext("2d");
  const w = c.width, h = c.height, pad = 30;
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, 10, w - pad - 10, h - pad - 10);
  ctx.fillStyle = "#444";
  ctx.fillText("FAR", w / 2, h - 8);
  ctx.save();
  ctx.translate(10, h / 2);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText("1 - FRR", 0, 0);
  ctx.restore();
  const x = (far) => pad + far * (w - pad - 10);
  const y = (tar) => h - pad - tar * (h - pad - 10);
  ctx.strokeStyle = "#ccc";
  ctx.beginPath();
  ctx.moveTo(x(0), y(1));
  ctx.lineTo(x(1), y(0));
  ctx.stroke();
  ctx.strokeStyle = "#1565c0";
  ctx.lineWidth = 2;
  ctx.beginPath();
  r.far.forEach((far, i) => {
    const px = x(far), py = y(1 - r.frr[i]);
    i === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py);
  });
  ctx.stroke();
  ctx.lineWidth = 1;
  ctx.fillStyle = "#c62828";
  ctx.beginPath();
  ctx.arc(x(r.eer), y(1 - r.eer), 4, 0, 2 * Math.PI);
  ctx.fill();
  $("eer").textContent = `EER        ${r.eer.toFixed(4)}\nthreshold  ${r.eer_threshold.toFixed(4)}`;
});

await init();
for (const id of ["lambda", "side", "lo", "hi"]) $(id).addEventListener("input", updateMask);
$("seed").addEventListener("input", updateBlend);
for (const id of ["sep", "n"]) $(id).addEventListener("input", updateRoc);
updateMask();
updateRoc();

import init, { synth_ir, interpolate, baselines } from "./pkg/irfield_web.js";

const TAPS = 400;
const SEED = 1n;

function plot(canvas, series) {
  const ctx = canvas.getContext("2d");
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  const peak = Math.max(1e-12, ...series.flatMap(([data]) => Array.from(data, Math.abs)));
  for (const [data, color] of series) {
    ctx.strokeStyle = color;
    ctx.beginPath();
    for (let i = 0; i < data.length; i++) {
      const x = (i / (data.length - 1)) * width;
      const y = height / 2 - (data[i] / peak) * (height / 2 - 4);
      i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
    }
    ctx.stroke();
  }
}

function bind(id, fn) {
  const input = document.getElementById(id);
  const out = document.getElementById(`${id}-v`);
  input.addEventListener("input", () => {
    if (out) out.value = input.value;
    fn();
  });
  if (out) out.value = input.value;
  return () => Number(input.value);
}

function fieldView() {
  const az = bind("f-az", draw);
  const el = bind("f-el", draw);
  function draw() {
    const ir = synth_ir(az(), el(), TAPS, SEED);
    plot(document.getElementById("f-plot"), [
      [ir.subarray(0, TAPS), "#1565c0"],
      [ir.subarray(TAPS), "#c62828"],
    ]);
  }
  draw();
}

function interpView() {
  const count = bind("i-count", draw);
  const az = bind("i-az", draw);
  const el = bind("i-el", draw);
  function draw() {
    const r = interpolate(az(), el(), count(), SEED);
    document.getElementById("i-score").textContent =
      `SDR nearest ${r.nearest_sdr_db.toFixed(2)} dB, bilinear ${r.bilinear_sdr_db.toFixed(2)} dB`;
    plot(document.getElementById("i-plot"), [
      [r.truth.subarray(0, TAPS), "#000"],
      [r.nearest.subarray(0, TAPS), "#2e7d32"],
      [r.bilinear.subarray(0, TAPS), "#ef6c00"],
    ]);
    r.free();
  }
  draw();
}

function noiseView() {
  const snr = bind("n-snr", () => {});
  document.getElementById("n-run").addEventListener("click", () => {
    const r = baselines(90, 0, snr(), SEED);
    document.getElementById("n-score").textContent =
      `SDR Wiener ${r[0].toFixed(2)} dB, NLMS ${r[1].toFixed(2)} dB`;
    plot(document.getElementById("n-plot"), [
      [r.subarray(2, 2 + TAPS), "#000"],
      [r.subarray(2 + TAPS, 2 + 2 * TAPS), "#6a1b9a"],
      [r.subarray(2 + 2 * TAPS), "#00838f"],
    ]);
  });
}

await init();
fieldView();
interpView();
noiseView();

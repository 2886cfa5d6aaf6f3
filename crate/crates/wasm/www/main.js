import init, { solve_coupled_fisher, principal_mode, field_with_constant_road } from "./pkg/fieldroad_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const int = (id) => Math.round(num(id));

// Viridis-like ramp sampled at five stops.
const STOPS = [
  [68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37],
];

function color(t) {
  const x = Math.min(1, Math.max(0, t)) * (STOPS.length - 1);
  const i = Math.min(STOPS.length - 2, Math.floor(x));
  const f = x - i;
  return STOPS[i].map((c, k) => Math.round(c + f * (STOPS[i + 1][k] - c)));
}

function paint(canvas, cols, rows, value, lo, hi) {
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(cols, rows);
  const span = hi > lo ? hi - lo : 1;
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      const [R, G, B] = color((value(c, r) - lo) / span);
      const o = 4 * (r * cols + c);
      img.data.set([R, G, B, 255], o);
    }
  }
  const tmp = document.createElement("canvas");
  tmp.width = cols;
  tmp.height = rows;
  tmp.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(tmp, 0, 0, canvas.width, canvas.height);
}

function draw(result) {
  const nx = result.nx, ny = result.ny;
  const v = result.field;
  const road = result.road;
  let hi = 0;
  for (const x of v) hi = Math.max(hi, x);
  for (const x of road) hi = Math.max(hi, x);
  // Row 0 of the data is the road side; canvas rows grow downwards.
  paint($("heat"), nx + 1, ny + 1, (c, r) => v[(ny - r) * (nx + 1) + c], 0, hi);
  if (road.length > 0) {
    paint($("road"), nx + 1, 1, (c) => road[c], 0, hi);
  } else {
    $("road").getContext("2d").clearRect(0, 0, $("road").width, $("road").height);
  }
  $("info").className = "";
  $("info").textContent = `${result.info}\ncolour scale 0 .. ${hi.toFixed(4)}`;
  result.free();
}

function run(label, compute) {
  $("info").className = "";
  $("info").textContent = `${label}...`;
  // Let the browser repaint the status line before the solver blocks.
  setTimeout(() => {
    const t0 = performance.now();
    try {
      const result = compute();
      const ms = (performance.now() - t0).toFixed(0);
      draw(result);
      $("info").textContent += `\n${label}: ${ms} ms`;
    } catch (e) {
      $("info").className = "error";
      $("info").textContent = `${label} failed: ${e.message ?? e}`;
    }
  }, 10);
}

await init();

$("coupled").onclick = () =>
  run("coupled solve", () =>
    solve_coupled_fisher(num("d"), num("mu"), num("nu"), num("ell"), num("height"), int("nx"), int("ny")));
$("mode").onclick = () =>
  run("principal mode", () => principal_mode(num("ell"), num("height"), int("nx"), int("ny")));
$("field").onclick = () =>
  run("field solve", () =>
    field_with_constant_road(num("d"), num("w"), num("ell"), num("height"), int("nx"), int("ny")));

$("coupled").click();

import init, { Scene, receptive_field, preset_layers } from "./pkg/fcn_cascade_web.js";

const $ = (id) => document.getElementById(id);
const ZOOM = 2;
let scene = null;
let proposals = [];
let faces = [];
let drag = null;

function paint(canvas, rgba, w, h) {
  const off = new OffscreenCanvas(w, h);
  off.getContext("2d").putImageData(new ImageData(new Uint8ClampedArray(rgba), w, h), 0, 0);
  canvas.width = w * ZOOM;
  canvas.height = h * ZOOM;
  const ctx = canvas.getContext("2d");
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, w * ZOOM, h * ZOOM);
  return ctx;
}

function outline(ctx, [x, y, w, h], color, dash = []) {
  ctx.setLineDash(dash);
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.strokeRect(x * ZOOM, y * ZOOM, w * ZOOM, h * ZOOM);
}

function redraw() {
  const w = scene.width(), h = scene.height();
  for (const [id, rgba] of [["scene", scene.image_rgba()], ["map", scene.score_map_rgba()]]) {
    const ctx = paint($(id), rgba, w, h);
    faces.forEach((f) => outline(ctx, f, "#0c0", [4, 3]));
    proposals.forEach((p) => outline(ctx, p.bbox, p.best_iou >= 0.5 ? "#08f" : "#f40"));
    if (drag && drag.w !== undefined) outline(ctx, [drag.x, drag.y, drag.w, drag.h], "#fff");
  }
}

function runProposals() {
  for (const id of ["noise", "threshold", "gate"]) $(`${id}-v`).textContent = $(id).value;
  try {
    proposals = JSON.parse(scene.propose(+$("noise").value, +$("threshold").value, +$("gate").value));
    const hits = proposals.filter((p) => p.best_iou >= 0.5).length;
    $("proposal-out").textContent =
      `${proposals.length} proposals, ${hits} on a face (blue), ${faces.length} faces (dashed green)\n` +
      proposals.slice(0, 8).map((p) =>
        `box score ${p.omega.toFixed(1)}  mean ${p.score.toFixed(3)}  best IoU ${p.best_iou.toFixed(2)}`).join("\n");
  } catch (e) {
    $("proposal-out").textContent = `error: ${e}`;
  }
  redraw();
}

function loadScene() {
  scene = new Scene(Math.max(0, +$("seed").value | 0));
  faces = JSON.parse(scene.faces());
  drag = null;
  runProposals();
}

function pointer(ev) {
  const r = ev.target.getBoundingClientRect();
  return [(ev.clientX - r.left) / ZOOM, (ev.clientY - r.top) / ZOOM];
}

for (const id of ["scene", "map"]) {
  const c = $(id);
  c.addEventListener("mousedown", (ev) => { const [x, y] = pointer(ev); drag = { x, y }; });
  c.addEventListener("mousemove", (ev) => {
    if (!drag || ev.buttons !== 1) return;
    const [x, y] = pointer(ev);
    drag.w = x - drag.x;
    drag.h = y - drag.y;
    redraw();
  });
  c.addEventListener("mouseup", () => {
    if (!drag || !drag.w || !drag.h) return;
    try {
      const v = JSON.parse(scene.inspect_box(drag.x, drag.y, drag.w, drag.h));
      $("proposal-out").textContent =
        `dragged box: box score ${v.omega.toFixed(2)}, best IoU with a face ${v.best_iou.toFixed(2)}`;
    } catch (e) {
      $("proposal-out").textContent = `error: ${e}`;
    }
  });
}

function runField() {
  try {
    const r = JSON.parse(receptive_field($("layers").value, +$("in-w").value, +$("in-h").value));
    const heat = r.heatmap ? `${r.heatmap[0]} x ${r.heatmap[1]} cells` : "input smaller than one window";
    $("field-out").textContent =
      `${r.layers} layers\nstride ${r.stride}\nwindow ${r.window}\noffset ${r.offset}\nheatmap ${heat}`;
  } catch (e) {
    $("field-out").textContent = `error: ${e}`;
  }
}

await init();
$("seed").addEventListener("change", loadScene);
for (const id of ["noise", "threshold", "gate"]) $(id).addEventListener("input", runProposals);
document.querySelectorAll("button[data-stage]").forEach((b) =>
  b.addEventListener("click", () => { $("layers").value = preset_layers(+b.dataset.stage); runField(); }));
for (const id of ["layers", "in-w", "in-h"]) $(id).addEventListener("input", runField);
$("layers").value = preset_layers(1);
runField();
loadScene();

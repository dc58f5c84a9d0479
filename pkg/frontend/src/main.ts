/**
 * DOM bootstrap: file pickers, per-bone pose sliders, display mode, and the
 * error banner.  State mutations funnel through state.ts; the viewer is only
 * told "pose dirty" / "colors dirty".
 */

import { BundleError } from "./bundle.js";
import { PoseError, savePose } from "./pose.js";
import { quatFromEulerXYZ, quatToEulerXYZ } from "./skinning.js";
import {
  createState, loadBundleIntoState, loadPoseIntoState, resetTransforms,
  selectBone, setTransform, DisplayMode, DISPLAY_MODES,
} from "./state.js";
import { PoseViewer, boneColor } from "./viewer.js";

const state = createState();

const canvas = document.getElementById("view") as HTMLCanvasElement;
const banner = document.getElementById("banner") as HTMLDivElement;
const info = document.getElementById("info") as HTMLDivElement;
const boneSelect = document.getElementById("bone") as HTMLSelectElement;
const modeSelect = document.getElementById("mode") as HTMLSelectElement;
const bundleInput = document.getElementById("bundle-file") as HTMLInputElement;
const poseInput = document.getElementById("pose-file") as HTMLInputElement;
const saveButton = document.getElementById("save-pose") as HTMLButtonElement;
const resetButton = document.getElementById("reset-pose") as HTMLButtonElement;

const viewer = new PoseViewer(canvas, state);

const SLIDERS = ["rx", "ry", "rz", "tx", "ty", "tz"] as const;
const sliderEls = SLIDERS.map((id) => document.getElementById(id) as HTMLInputElement);
// per-bone slider memory so switching bones restores knob positions
let uiPose: number[][] = [];

function showError(message: string): void {
  banner.textContent = message;
  banner.classList.add("visible", "error");
}

function showWarnings(warnings: string[]): void {
  if (!warnings.length) {
    banner.classList.remove("visible", "error");
    banner.textContent = "";
    return;
  }
  banner.textContent = warnings.join("; ");
  banner.classList.add("visible");
  banner.classList.remove("error");
}

function clearBanner(): void {
  showWarnings([]);
}

function refreshBoneList(): void {
  boneSelect.innerHTML = "";
  const b = state.bundle;
  if (!b) return;
  for (let k = 0; k < b.nBones; k++) {
    const opt = document.createElement("option");
    opt.value = String(k);
    const [r, g, bl] = boneColor(k, b.nBones);
    opt.textContent = `bone ${k}`;
    opt.style.color = `rgb(${255 * r | 0}, ${255 * g | 0}, ${255 * bl | 0})`;
    boneSelect.appendChild(opt);
  }
  boneSelect.value = String(state.selectedBone ?? 0);
}

function slidersFromState(bone: number): void {
  const vals = uiPose[bone];
  sliderEls.forEach((el, i) => { el.value = String(vals[i]); });
}

function readSliders(): number[] {
  return sliderEls.map((el) => parseFloat(el.value) || 0);
}

function onSliderInput(): void {
  const bone = state.selectedBone;
  if (bone === null || !state.bundle) return;
  const vals = readSliders();
  uiPose[bone] = vals;
  setTransform(state, bone, {
    rotation: quatFromEulerXYZ(vals[0], vals[1], vals[2]),
    translation: [vals[3], vals[4], vals[5]],
  });
  viewer.markDirty();
}

function syncUiPoseFromTransforms(): void {
  uiPose = state.transforms.map((t) => {
    const e = quatToEulerXYZ(t.rotation);
    return [e[0], e[1], e[2], ...t.translation];
  });
  if (state.selectedBone !== null) slidersFromState(state.selectedBone);
}

function describeBundle(): void {
  const b = state.bundle;
  info.textContent = b
    ? `${b.nVertices} vertices, ${b.nFaces} faces, ${b.nBones} bones, `
    + `${b.skeletonEdges.length / 2} skeleton edges`
    : "no bundle loaded";
}

async function onBundlePicked(): Promise<void> {
  const file = bundleInput.files?.[0];
  if (!file) return;
  const text = await file.text();
  try {
    loadBundleIntoState(state, text);
  } catch (e) {
    if (e instanceof BundleError) {
      showError(`bundle rejected: ${e.message}`);
      return;
    }
    throw e;
  }
  clearBanner();
  viewer.setBundle(state.bundle!);
  syncUiPoseFromTransforms();
  refreshBoneList();
  describeBundle();
}

async function onPosePicked(): Promise<void> {
  const file = poseInput.files?.[0];
  if (!file) return;
  const text = await file.text();
  try {
    const warnings = loadPoseIntoState(state, text);
    showWarnings(warnings);
  } catch (e) {
    if (e instanceof PoseError || e instanceof Error && state.bundle === null) {
      showError(`pose rejected: ${(e as Error).message}`);
      return;
    }
    throw e;
  }
  syncUiPoseFromTransforms();
  viewer.markDirty();
}

function onSavePose(): void {
  const blob = new Blob([savePose(state.transforms)], { type: "application/json" });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = "pose.json";
  a.click();
  URL.revokeObjectURL(a.href);
}

function onReset(): void {
  resetTransforms(state);
  uiPose = state.transforms.map(() => [0, 0, 0, 0, 0, 0]);
  if (state.selectedBone !== null) slidersFromState(state.selectedBone);
  clearBanner();
  viewer.markDirty();
}

bundleInput.addEventListener("change", () => { void onBundlePicked(); });
poseInput.addEventListener("change", () => { void onPosePicked(); });
saveButton.addEventListener("click", onSavePose);
resetButton.addEventListener("click", onReset);
boneSelect.addEventListener("change", () => {
  selectBone(state, parseInt(boneSelect.value, 10));
  if (state.selectedBone !== null) slidersFromState(state.selectedBone);
});
modeSelect.addEventListener("change", () => {
  const mode = modeSelect.value as DisplayMode;
  state.displayMode = DISPLAY_MODES.includes(mode) ? mode : "shaded";
  viewer.refreshColors();
});
sliderEls.forEach((el) => el.addEventListener("input", onSliderInput));

// drag to orbit, wheel to dolly
let dragging = false;
let lastX = 0, lastY = 0;
canvas.addEventListener("pointerdown", (ev) => {
  dragging = true;
  lastX = ev.clientX;
  lastY = ev.clientY;
  canvas.setPointerCapture(ev.pointerId);
});
canvas.addEventListener("pointermove", (ev) => {
  if (!dragging) return;
  state.orbit.azimuth -= 0.008 * (ev.clientX - lastX);
  state.orbit.elevation = Math.min(1.5, Math.max(-1.5,
    state.orbit.elevation + 0.008 * (ev.clientY - lastY)));
  lastX = ev.clientX;
  lastY = ev.clientY;
});
canvas.addEventListener("pointerup", () => { dragging = false; });
canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  state.orbit.distance = Math.min(20, Math.max(0.2,
    state.orbit.distance * Math.exp(0.001 * ev.deltaY)));
}, { passive: false });

function fit(): void {
  const rect = canvas.parentElement!.getBoundingClientRect();
  viewer.resize(rect.width, rect.height);
}
window.addEventListener("resize", fit);
fit();
describeBundle();

/**
 * Viewer state: the loaded bundle plus everything the user can touch.
 * Transforms default to identity and the selected bone is always a valid
 * index or null; loaders that throw leave the previous state untouched.
 */

import { Bundle, parseBundle } from "./bundle.js";
import { BoneTransform, identityTransform } from "./skinning.js";
import { loadPose } from "./pose.js";

export type DisplayMode = "shaded" | "bones" | "skeleton";

export const DISPLAY_MODES: DisplayMode[] = ["shaded", "bones", "skeleton"];

export interface OrbitState {
  azimuth: number;   // radians around +y
  elevation: number; // radians above the xz plane
  distance: number;
}

export interface ViewerState {
  bundle: Bundle | null;
  transforms: BoneTransform[];
  selectedBone: number | null;
  orbit: OrbitState;
  displayMode: DisplayMode;
}

export function createState(): ViewerState {
  return {
    bundle: null,
    transforms: [],
    selectedBone: null,
    orbit: { azimuth: 0.6, elevation: 0.3, distance: 2.5 },
    displayMode: "shaded",
  };
}

/** Parse bundle text and swap it in.  On a parse error the exception
 * propagates and the state keeps its previous bundle and pose. */
export function loadBundleIntoState(state: ViewerState, text: string): Bundle {
  const bundle = parseBundle(text);
  state.bundle = bundle;
  state.transforms = [];
  for (let b = 0; b < bundle.nBones; b++) state.transforms.push(identityTransform());
  state.selectedBone = bundle.nBones > 0 ? 0 : null;
  return bundle;
}

export function selectBone(state: ViewerState, bone: number | null): void {
  if (bone === null || state.bundle === null
    || !Number.isInteger(bone) || bone < 0 || bone >= state.bundle.nBones) {
    state.selectedBone = null;
    return;
  }
  state.selectedBone = bone;
}

export function setTransform(state: ViewerState, bone: number, t: BoneTransform): void {
  if (bone < 0 || bone >= state.transforms.length) {
    throw new Error(`bone ${bone} out of range`);
  }
  state.transforms[bone] = t;
}

export function resetTransforms(state: ViewerState): void {
  state.transforms = state.transforms.map(() => identityTransform());
}

/** Apply a pose file to the current bundle; warnings bubble up for the UI.
 * Throws (state unchanged) when no bundle is loaded or the file is bad. */
export function loadPoseIntoState(state: ViewerState, text: string): string[] {
  if (state.bundle === null) {
    throw new Error("load a bundle before loading a pose");
  }
  const { transforms, warnings } = loadPose(text, state.bundle.nBones);
  state.transforms = transforms;
  return warnings;
}

/**
 * Pose file round trip.  A pose is a JSON object keyed by bone id:
 *
 *   { "1": { "rotation_quat_wxyz": [w, x, y, z],
 *            "translation_xyz": [x, y, z] } }
 *
 * Bones at identity are omitted on save, so an untouched session writes {}.
 * Numbers survive JSON round trips exactly (shortest-repr doubles), which
 * keeps saved poses lossless.
 */

import { BoneTransform, Quat, Vec3, identityTransform, isIdentity } from "./skinning.js";

export class PoseError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "PoseError";
  }
}

export interface PoseLoad {
  transforms: BoneTransform[];
  warnings: string[];
}

export function savePose(transforms: BoneTransform[]): string {
  const doc: Record<string, unknown> = {};
  transforms.forEach((t, b) => {
    if (isIdentity(t)) return;
    doc[String(b)] = {
      rotation_quat_wxyz: [...t.rotation],
      translation_xyz: [...t.translation],
    };
  });
  return JSON.stringify(doc, null, 1);
}

function numberTuple(v: unknown, len: number, path: string): number[] {
  if (!Array.isArray(v) || v.length !== len || v.some((x) => typeof x !== "number" || !Number.isFinite(x))) {
    throw new PoseError(`${path}: expected ${len} finite numbers`);
  }
  return v as number[];
}

/** Parse a pose file against a known bone count.  Unknown bone ids are
 * reported as warnings and ignored; malformed entries are hard errors. */
export function loadPose(text: string, nBones: number): PoseLoad {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (e) {
    throw new PoseError(`not valid JSON: ${(e as Error).message}`);
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new PoseError("top level: expected an object keyed by bone id");
  }

  const transforms: BoneTransform[] = [];
  for (let b = 0; b < nBones; b++) transforms.push(identityTransform());
  const warnings: string[] = [];

  for (const [key, entry] of Object.entries(doc)) {
    const bone = /^\d+$/.test(key) ? parseInt(key, 10) : NaN;
    if (!Number.isInteger(bone) || bone >= nBones) {
      warnings.push(`unknown bone id ${JSON.stringify(key)} ignored (bundle has ${nBones} bones)`);
      continue;
    }
    if (typeof entry !== "object" || entry === null || Array.isArray(entry)) {
      throw new PoseError(`bone ${key}: expected an object`);
    }
    const rec = entry as Record<string, unknown>;
    const rot = numberTuple(rec["rotation_quat_wxyz"], 4, `bone ${key}.rotation_quat_wxyz`);
    const tr = numberTuple(rec["translation_xyz"], 3, `bone ${key}.translation_xyz`);
    transforms[bone] = {
      rotation: rot as Quat,
      translation: tr as Vec3,
    };
  }
  return { transforms, warnings };
}

/**
 * CPU blend skinning.  The deformed position of vertex i is
 *
 *   nu'_i = sum_b w_ib (R_b nu_i + t_b)
 *
 * with R_b the rotation of the user's per-bone quaternion (w first) and t_b
 * its translation.  Computed on the CPU so the result can be compared
 * number-for-number against the reconstruction engine's own posing op.
 */

export type Quat = [number, number, number, number]; // w, x, y, z
export type Vec3 = [number, number, number];

export interface BoneTransform {
  rotation: Quat;
  translation: Vec3;
}

export function identityTransform(): BoneTransform {
  return { rotation: [1, 0, 0, 0], translation: [0, 0, 0] };
}

export function isIdentity(t: BoneTransform): boolean {
  const [w, x, y, z] = t.rotation;
  const [tx, ty, tz] = t.translation;
  return w === 1 && x === 0 && y === 0 && z === 0
    && tx === 0 && ty === 0 && tz === 0;
}

export function quatMul(a: Quat, b: Quat): Quat {
  const [aw, ax, ay, az] = a;
  const [bw, bx, by, bz] = b;
  return [
    aw * bw - ax * bx - ay * by - az * bz,
    aw * bx + ax * bw + ay * bz - az * by,
    aw * by - ax * bz + ay * bw + az * bx,
    aw * bz + ax * by - ay * bx + az * bw,
  ];
}

export function quatNormalize(q: Quat): Quat {
  const n = Math.hypot(q[0], q[1], q[2], q[3]);
  if (n === 0) return [1, 0, 0, 0];
  return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
}

/** Intrinsic XYZ Euler angles (radians) to a unit quaternion: rotate about
 * x, then the rotated y, then the rotated z.  One fixed order keeps slider
 * poses reproducible. */
export function quatFromEulerXYZ(rx: number, ry: number, rz: number): Quat {
  const qx: Quat = [Math.cos(rx / 2), Math.sin(rx / 2), 0, 0];
  const qy: Quat = [Math.cos(ry / 2), 0, Math.sin(ry / 2), 0];
  const qz: Quat = [Math.cos(rz / 2), 0, 0, Math.sin(rz / 2)];
  return quatMul(quatMul(qx, qy), qz);
}

/** Inverse of quatFromEulerXYZ for display purposes (slider readback after
 * loading a pose file).  Away from the ry = +-pi/2 gimbal the round trip is
 * exact to float precision; at gimbal rz collapses into rx. */
export function quatToEulerXYZ(q: Quat): Vec3 {
  const m = quatToMatrix(quatNormalize(q));
  const sy = Math.min(1, Math.max(-1, m[2]));
  const ry = Math.asin(sy);
  if (Math.abs(sy) < 0.9999999) {
    return [Math.atan2(-m[5], m[8]), ry, Math.atan2(-m[1], m[0])];
  }
  return [Math.atan2(m[3], m[4]), ry, 0];
}

/** Row-major 3x3 rotation matrix of a unit quaternion. */
export function quatToMatrix(q: Quat): number[] {
  const [w, x, y, z] = q;
  return [
    1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
    2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
    2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
  ];
}

export function rotateVec(q: Quat, v: Vec3): Vec3 {
  const m = quatToMatrix(q);
  return [
    m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
    m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
    m[6] * v[0] + m[7] * v[1] + m[8] * v[2],
  ];
}

/**
 * Blend the per-bone rigid transforms over the stored skinning weights.
 * `rest` is the flat (N*3) rest vertex buffer and is never written; the
 * deformed positions land in `out` (allocated if not supplied).
 */
export function applyPose(
  rest: Float32Array,
  weights: Float32Array,
  nBones: number,
  transforms: BoneTransform[],
  out?: Float32Array,
): Float32Array {
  const n = rest.length / 3;
  if (transforms.length !== nBones) {
    throw new Error(`expected ${nBones} bone transforms, got ${transforms.length}`);
  }
  if (weights.length !== n * nBones) {
    throw new Error(`weights length ${weights.length} does not match ${n} vertices x ${nBones} bones`);
  }
  const posed = out ?? new Float32Array(rest.length);
  if (posed.length !== rest.length) {
    throw new Error("output buffer size mismatch");
  }

  const mats: number[][] = transforms.map((t) => quatToMatrix(t.rotation));
  for (let i = 0; i < n; i++) {
    const vx = rest[3 * i], vy = rest[3 * i + 1], vz = rest[3 * i + 2];
    let px = 0, py = 0, pz = 0;
    for (let b = 0; b < nBones; b++) {
      const w = weights[i * nBones + b];
      if (w === 0) continue;
      const m = mats[b];
      const t = transforms[b].translation;
      px += w * (m[0] * vx + m[1] * vy + m[2] * vz + t[0]);
      py += w * (m[3] * vx + m[4] * vy + m[5] * vz + t[1]);
      pz += w * (m[6] * vx + m[7] * vy + m[8] * vz + t[2]);
    }
    posed[3 * i] = px;
    posed[3 * i + 1] = py;
    posed[3 * i + 2] = pz;
  }
  return posed;
}

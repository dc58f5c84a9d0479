/**
 * Articulated-bundle parsing: one self-describing JSON document holding the
 * rest mesh, per-vertex skinning weights, bone rest state and skeleton edges.
 * Numeric payloads are base64 of little-endian f32 (u32 for indices).
 *
 * Every malformed input is reported as a BundleError naming the offending
 * field, so the UI can show it in a banner and keep the previous state.
 */

export const FORMAT_VERSION = 1;

export class BundleError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "BundleError";
  }
}

export interface Bundle {
  formatVersion: number;
  nVertices: number;
  nFaces: number;
  nBones: number;
  vertices: Float32Array;      // N*3
  faces: Uint32Array;          // M*3
  colors: Float32Array | null; // N*3 in [0, 1]
  weights: Float32Array;       // N*B, rows sum to 1
  dominant: Uint32Array;       // N, argmax bone id per vertex
  boneCenters: Float32Array;   // B*3
  boneQuats: Float32Array;     // B*4, w first
  boneLogScales: Float32Array; // B*3
  restQuats: Float32Array;     // B*4
  restTrans: Float32Array;     // B*3
  skeletonEdges: Uint32Array;  // E*2
  skeletonCounts: Uint32Array; // E
  meta: Record<string, unknown>;
}

function section(doc: Record<string, unknown>, key: string): Record<string, unknown> {
  const sec = doc[key];
  if (sec === undefined) throw new BundleError(`${key}: missing section`);
  if (typeof sec !== "object" || sec === null || Array.isArray(sec)) {
    throw new BundleError(`${key}: expected object`);
  }
  return sec as Record<string, unknown>;
}

function decodeBytes(payload: unknown, path: string): Uint8Array {
  if (typeof payload !== "string") {
    throw new BundleError(`${path}: expected base64 string`);
  }
  let text: string;
  try {
    text = atob(payload);
  } catch {
    throw new BundleError(`${path}: invalid base64`);
  }
  const bytes = new Uint8Array(text.length);
  for (let i = 0; i < text.length; i++) bytes[i] = text.charCodeAt(i);
  return bytes;
}

// Typed-array views assume a little-endian host, which is every platform a
// browser runs on in practice; byte order is validated against the header
// counts rather than re-decoded per element.
function f32(payload: unknown, count: number, path: string): Float32Array {
  const bytes = decodeBytes(payload, path);
  if (bytes.length !== 4 * count) {
    throw new BundleError(
      `${path}: payload holds ${Math.floor(bytes.length / 4)} values, expected ${count}`);
  }
  return new Float32Array(bytes.buffer, 0, count);
}

function u32(payload: unknown, count: number, path: string): Uint32Array {
  const bytes = decodeBytes(payload, path);
  if (bytes.length !== 4 * count) {
    throw new BundleError(
      `${path}: payload holds ${Math.floor(bytes.length / 4)} values, expected ${count}`);
  }
  return new Uint32Array(bytes.buffer, 0, count);
}

function intField(sec: Record<string, unknown>, key: string, path: string): number {
  const v = sec[key];
  if (typeof v !== "number" || !Number.isInteger(v) || v < 0) {
    throw new BundleError(`${path}.${key}: expected a non-negative integer`);
  }
  return v;
}

function edgeList(sec: Record<string, unknown>, key: string): number[][] {
  const v = sec[key];
  if (!Array.isArray(v)) throw new BundleError(`skeleton.${key}: expected list`);
  return v as number[][];
}

export function parseBundle(text: string): Bundle {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (e) {
    throw new BundleError(`not valid JSON: ${(e as Error).message}`);
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new BundleError("top level: expected object");
  }
  const root = doc as Record<string, unknown>;
  const version = root["format_version"];
  if (version !== FORMAT_VERSION) {
    throw new BundleError(
      `format_version: expected ${FORMAT_VERSION}, got ${JSON.stringify(version)}`);
  }

  const mesh = section(root, "mesh");
  const skinning = section(root, "skinning");
  const bones = section(root, "bones");
  const rest = section(root, "rest_transforms");
  const skeleton = section(root, "skeleton");

  const nVertices = intField(mesh, "n_vertices", "mesh");
  const nFaces = intField(mesh, "n_faces", "mesh");
  const nBones = intField(skinning, "n_bones", "skinning");

  const vertices = f32(mesh["vertices"], 3 * nVertices, "mesh.vertices");
  const faces = u32(mesh["faces"], 3 * nFaces, "mesh.faces");
  const colors = mesh["colors"] === null || mesh["colors"] === undefined
    ? null
    : f32(mesh["colors"], 3 * nVertices, "mesh.colors");

  const weights = f32(skinning["weights"], nVertices * nBones, "skinning.weights");
  const dominant = u32(skinning["dominant"], nVertices, "skinning.dominant");

  const boneCenters = f32(bones["centers"], 3 * nBones, "bones.centers");
  const boneQuats = f32(bones["quats"], 4 * nBones, "bones.quats");
  const boneLogScales = f32(bones["log_scales"], 3 * nBones, "bones.log_scales");
  const restQuats = f32(rest["quats"], 4 * nBones, "rest_transforms.quats");
  const restTrans = f32(rest["trans"], 3 * nBones, "rest_transforms.trans");

  const rawEdges = edgeList(skeleton, "edges");
  const rawCounts = edgeList(skeleton, "counts") as unknown as number[];
  if (rawCounts.length !== rawEdges.length) {
    throw new BundleError("skeleton.counts: one count per edge required");
  }
  const skeletonEdges = new Uint32Array(2 * rawEdges.length);
  for (let e = 0; e < rawEdges.length; e++) {
    const pair = rawEdges[e];
    if (!Array.isArray(pair) || pair.length !== 2) {
      throw new BundleError("skeleton.edges: expected [a, b] pairs");
    }
    skeletonEdges[2 * e] = pair[0];
    skeletonEdges[2 * e + 1] = pair[1];
  }
  const skeletonCounts = Uint32Array.from(rawCounts, (c) => c as number);

  for (let i = 0; i < faces.length; i++) {
    if (faces[i] >= nVertices) {
      throw new BundleError("mesh.faces: vertex index out of range");
    }
  }
  for (let i = 0; i < dominant.length; i++) {
    if (dominant[i] >= nBones) {
      throw new BundleError("skinning.dominant: bone id out of range");
    }
  }
  for (let i = 0; i < skeletonEdges.length; i++) {
    if (skeletonEdges[i] >= nBones) {
      throw new BundleError("skeleton.edges: bone id out of range");
    }
  }

  const meta = root["meta"];
  return {
    formatVersion: FORMAT_VERSION,
    nVertices, nFaces, nBones,
    vertices, faces, colors,
    weights, dominant,
    boneCenters, boneQuats, boneLogScales,
    restQuats, restTrans,
    skeletonEdges, skeletonCounts,
    meta: (typeof meta === "object" && meta !== null && !Array.isArray(meta)
      ? meta as Record<string, unknown> : {}),
  };
}

import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";
import { BundleError, parseBundle } from "../src/bundle.js";
import { createState, loadBundleIntoState } from "../src/state.js";

const FIXTURES = new URL("../fixtures/", import.meta.url);
const bundleText = readFileSync(new URL("bundle.json", FIXTURES), "utf8");
const corruptText = readFileSync(new URL("bundle_corrupt.json", FIXTURES), "utf8");

describe("parseBundle", () => {
  it("echoes the header counts of the capsule fixture", () => {
    const header = JSON.parse(bundleText);
    const b = parseBundle(bundleText);
    expect(b.nVertices).toBe(header.mesh.n_vertices);
    expect(b.nFaces).toBe(header.mesh.n_faces);
    expect(b.nBones).toBe(header.skinning.n_bones);
    expect(b.nBones).toBe(2);
    expect(b.vertices.length).toBe(3 * b.nVertices);
    expect(b.faces.length).toBe(3 * b.nFaces);
    expect(b.weights.length).toBe(b.nVertices * b.nBones);
    expect(b.dominant.length).toBe(b.nVertices);
    expect(b.boneQuats.length).toBe(4 * b.nBones);
    expect(b.skeletonEdges.length % 2).toBe(0);
  });

  it("keeps skinning rows normalized and bone ids in range", () => {
    const b = parseBundle(bundleText);
    for (let i = 0; i < b.nVertices; i++) {
      let s = 0;
      for (let k = 0; k < b.nBones; k++) s += b.weights[i * b.nBones + k];
      expect(Math.abs(s - 1)).toBeLessThan(1e-5);
      expect(b.dominant[i]).toBeLessThan(b.nBones);
    }
  });

  it("reload yields an identical initial vertex buffer", () => {
    const a = parseBundle(bundleText);
    const b = parseBundle(bundleText);
    expect(a.vertices).toEqual(b.vertices);
    expect(Buffer.from(a.vertices.buffer).equals(Buffer.from(b.vertices.buffer))).toBe(true);
  });

  it("rejects a corrupt base64 payload with a typed error", () => {
    expect(() => parseBundle(corruptText)).toThrowError(BundleError);
    expect(() => parseBundle(corruptText)).toThrowError(/mesh\.vertices/);
  });

  it("rejects non-JSON and wrong format_version", () => {
    expect(() => parseBundle("not json at all")).toThrowError(BundleError);
    const doc = JSON.parse(bundleText);
    doc.format_version = 2;
    expect(() => parseBundle(JSON.stringify(doc))).toThrowError(/format_version/);
  });

  it("rejects truncated payloads via the header length check", () => {
    const doc = JSON.parse(bundleText);
    doc.skinning.weights = doc.skinning.weights.slice(0, 8);
    expect(() => parseBundle(JSON.stringify(doc))).toThrowError(/skinning\.weights/);
  });
});

describe("loadBundleIntoState", () => {
  it("installs identity transforms and a valid selection", () => {
    const state = createState();
    loadBundleIntoState(state, bundleText);
    expect(state.bundle?.nBones).toBe(2);
    expect(state.transforms).toHaveLength(2);
    for (const t of state.transforms) {
      expect(t.rotation).toEqual([1, 0, 0, 0]);
      expect(t.translation).toEqual([0, 0, 0]);
    }
    expect(state.selectedBone).toBe(0);
  });

  it("leaves previous state untouched when the new file is corrupt", () => {
    const state = createState();
    loadBundleIntoState(state, bundleText);
    const before = state.bundle;
    const beforeTransforms = state.transforms;
    expect(() => loadBundleIntoState(state, corruptText)).toThrowError(BundleError);
    expect(state.bundle).toBe(before);
    expect(state.transforms).toBe(beforeTransforms);
  });
});

/**
 * Three.js presentation layer.  Owns the render loop, the deformable mesh
 * geometry, and the skeleton overlay.  All skinning math lives in
 * skinning.ts; this module just moves the results into GPU buffers.
 *
 * Recompute is debounced: slider events mark the pose dirty and the next
 * animation frame does one skinning pass, so a burst of input events costs
 * one recompute. Everything runs on the UI thread.
 */

import * as THREE from "three";
import { Bundle } from "./bundle.js";
import { applyPose, rotateVec, Vec3 } from "./skinning.js";
import { ViewerState } from "./state.js";

/** Evenly spaced hues, one per bone; also used for the selection readout. */
export function boneColor(b: number, nBones: number): [number, number, number] {
  const c = new THREE.Color();
  c.setHSL((b / Math.max(nBones, 1)) % 1, 0.75, 0.55);
  return [c.r, c.g, c.b];
}

export class PoseViewer {
  private renderer: THREE.WebGLRenderer;
  private scene: THREE.Scene;
  private camera: THREE.PerspectiveCamera;
  private mesh: THREE.Mesh | null = null;
  private geometry: THREE.BufferGeometry | null = null;
  private skeleton: THREE.LineSegments | null = null;
  private joints: THREE.Points | null = null;
  private bundle: Bundle | null = null;
  private posed: Float32Array | null = null;
  private dirty = false;
  private state: ViewerState;

  constructor(canvas: HTMLCanvasElement, state: ViewerState) {
    this.state = state;
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.renderer.setPixelRatio(window.devicePixelRatio);
    this.scene = new THREE.Scene();
    this.scene.background = new THREE.Color(0x10141a);
    this.camera = new THREE.PerspectiveCamera(45, 1, 0.01, 100);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.45));
    const key = new THREE.DirectionalLight(0xffffff, 1.6);
    key.position.set(2, 3, 4);
    this.scene.add(key);
    const fill = new THREE.DirectionalLight(0xbfd4ff, 0.5);
    fill.position.set(-3, -1, -2);
    this.scene.add(fill);
    this.renderer.setAnimationLoop(() => this.frame());
  }

  setBundle(bundle: Bundle): void {
    if (this.mesh) {
      this.scene.remove(this.mesh);
      this.geometry?.dispose();
      (this.mesh.material as THREE.Material).dispose();
    }
    if (this.skeleton) this.scene.remove(this.skeleton);
    if (this.joints) this.scene.remove(this.joints);
    this.bundle = bundle;
    this.posed = new Float32Array(bundle.vertices.length);
    this.posed.set(bundle.vertices);

    const geo = new THREE.BufferGeometry();
    geo.setAttribute("position",
      new THREE.BufferAttribute(this.posed, 3).setUsage(THREE.DynamicDrawUsage));
    geo.setIndex(new THREE.BufferAttribute(bundle.faces, 1));
    geo.setAttribute("color",
      new THREE.BufferAttribute(new Float32Array(bundle.vertices.length), 3));
    geo.computeVertexNormals();
    this.geometry = geo;
    const mat = new THREE.MeshLambertMaterial({ vertexColors: true, side: THREE.DoubleSide });
    this.mesh = new THREE.Mesh(geo, mat);
    this.scene.add(this.mesh);

    const edges = bundle.skeletonEdges;
    const linePos = new Float32Array(edges.length * 3);
    const lineGeo = new THREE.BufferGeometry();
    lineGeo.setAttribute("position",
      new THREE.BufferAttribute(linePos, 3).setUsage(THREE.DynamicDrawUsage));
    this.skeleton = new THREE.LineSegments(lineGeo,
      new THREE.LineBasicMaterial({ color: 0xffe14d }));
    this.scene.add(this.skeleton);

    const jointPos = new Float32Array(bundle.nBones * 3);
    const jointCol = new Float32Array(bundle.nBones * 3);
    for (let b = 0; b < bundle.nBones; b++) {
      const [r, g, bl] = boneColor(b, bundle.nBones);
      jointCol[3 * b] = r;
      jointCol[3 * b + 1] = g;
      jointCol[3 * b + 2] = bl;
    }
    const jointGeo = new THREE.BufferGeometry();
    jointGeo.setAttribute("position",
      new THREE.BufferAttribute(jointPos, 3).setUsage(THREE.DynamicDrawUsage));
    jointGeo.setAttribute("color", new THREE.BufferAttribute(jointCol, 3));
    this.joints = new THREE.Points(jointGeo,
      new THREE.PointsMaterial({ size: 8, sizeAttenuation: false, vertexColors: true }));
    this.scene.add(this.joints);

    this.refreshColors();
    this.markDirty();
  }

  /** Coalesce any number of input events into one skinning pass per frame. */
  markDirty(): void {
    this.dirty = true;
  }

  refreshColors(): void {
    if (!this.bundle || !this.geometry) return;
    const attr = this.geometry.getAttribute("color") as THREE.BufferAttribute;
    const colors = attr.array as Float32Array;
    const b = this.bundle;
    if (this.state.displayMode === "bones") {
      for (let i = 0; i < b.nVertices; i++) {
        const [r, g, bl] = boneColor(b.dominant[i], b.nBones);
        colors[3 * i] = r;
        colors[3 * i + 1] = g;
        colors[3 * i + 2] = bl;
      }
    } else if (b.colors) {
      colors.set(b.colors);
    } else {
      colors.fill(0.75);
    }
    attr.needsUpdate = true;
    if (this.skeleton) this.skeleton.visible = this.state.displayMode === "skeleton";
    if (this.joints) this.joints.visible = this.state.displayMode === "skeleton";
    if (this.mesh) {
      const mat = this.mesh.material as THREE.MeshLambertMaterial;
      mat.transparent = this.state.displayMode === "skeleton";
      mat.opacity = this.state.displayMode === "skeleton" ? 0.55 : 1.0;
      mat.needsUpdate = true;
    }
  }

  resize(width: number, height: number): void {
    this.renderer.setSize(width, height, false);
    this.camera.aspect = width / Math.max(height, 1);
    this.camera.updateProjectionMatrix();
  }

  private repose(): void {
    const b = this.bundle;
    if (!b || !this.posed || !this.geometry) return;
    applyPose(b.vertices, b.weights, b.nBones, this.state.transforms, this.posed);
    const pos = this.geometry.getAttribute("position") as THREE.BufferAttribute;
    pos.needsUpdate = true;
    this.geometry.computeVertexNormals();
    this.geometry.computeBoundingSphere();

    // bone centers ride their own transform with weight one
    const centers: Vec3[] = [];
    for (let k = 0; k < b.nBones; k++) {
      const t = this.state.transforms[k];
      const c: Vec3 = [b.boneCenters[3 * k], b.boneCenters[3 * k + 1], b.boneCenters[3 * k + 2]];
      const r = rotateVec(t.rotation, c);
      centers.push([r[0] + t.translation[0], r[1] + t.translation[1], r[2] + t.translation[2]]);
    }
    if (this.joints) {
      const jp = (this.joints.geometry.getAttribute("position") as THREE.BufferAttribute);
      const arr = jp.array as Float32Array;
      centers.forEach((c, k) => arr.set(c, 3 * k));
      jp.needsUpdate = true;
    }
    if (this.skeleton) {
      const lp = (this.skeleton.geometry.getAttribute("position") as THREE.BufferAttribute);
      const arr = lp.array as Float32Array;
      for (let e = 0; e < b.skeletonEdges.length / 2; e++) {
        arr.set(centers[b.skeletonEdges[2 * e]], 6 * e);
        arr.set(centers[b.skeletonEdges[2 * e + 1]], 6 * e + 3);
      }
      lp.needsUpdate = true;
    }
  }

  private frame(): void {
    if (this.dirty) {
      this.dirty = false;
      this.repose();
    }
    const o = this.state.orbit;
    this.camera.position.set(
      o.distance * Math.cos(o.elevation) * Math.sin(o.azimuth),
      o.distance * Math.sin(o.elevation),
      o.distance * Math.cos(o.elevation) * Math.cos(o.azimuth));
    this.camera.lookAt(0, 0, 0);
    this.renderer.render(this.scene, this.camera);
  }
}

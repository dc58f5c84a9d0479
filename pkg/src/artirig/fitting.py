"""Fitting loop: optimize field, bones, and motion against a dataset.

Each step draws one frame and a batch of pixels, renders them with the same
deterministic midpoint sampler the dataset generator uses, and assembles the
weighted objective (reconstruction, warp cycle on training and novel views,
surface anchoring, temporal smoothness, optional distillation gradients).
Checkpoints carry enough metadata to rebuild the models without the config
that produced them.
"""

from __future__ import annotations

import pathlib
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import no_grad, value
from .fields import FieldConfig, NetworkField
from .images import read_f32
from .losses import (LossBreakdown, LossWeights, MockL2Prior, PixelBatch,
                     PriorError, combine_losses, loss_cycle, loss_cycle_novel,
                     loss_recon, loss_smooth, sample_novel_camera, sds_step,
                     surface_penalty)
from .optim import AdamConfig, cosine_lr, optimize
from .params import CheckpointError, ParameterStore
from .rendering import (DegenerateFlowError, pixel_grid, render_flow_pixels,
                        render_pixels)
from .skinning import SkinningModel
from .warping import MotionSequence, fibonacci_sphere

PRIORS = ("none", "mock")


class DatasetError(ValueError):
    """Dataset directory is missing files or internally inconsistent."""


@dataclass
class FitConfig:
    weights: LossWeights = field(default_factory=LossWeights)
    n_bones: int = 8
    n_samples: int = 64  # ray samples for training-view renders
    sds_samples: int = 16  # ray samples for distillation renders
    ncyc_every: int = 3  # novel-view cycle period (steps)
    sds_every: int = 10  # distillation period (steps)
    steps: int = 3000
    lr: float = 5e-3
    lr_min_ratio: float = 1.0  # cosine-decay floor as a fraction of lr
    seed: int = 0
    batch_rays: int = 512
    novel_rays: int = 128  # rays per novel-view render (cycle and sds)
    adjacent_prob: float = 0.8  # chance a step supervises flow to the pair
    prior: str = "none"
    field: FieldConfig = field(default_factory=FieldConfig)
    learn_cameras: bool = False

    def __post_init__(self):
        if self.ncyc_every < 1 or self.sds_every < 1:
            raise ValueError("update periods must be >= 1")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.n_samples < 1 or self.sds_samples < 1:
            raise ValueError("need at least one sample per ray")
        if self.batch_rays < 1 or self.novel_rays < 1:
            raise ValueError("need at least one ray per batch")
        if not 0.0 <= self.adjacent_prob <= 1.0:
            raise ValueError("adjacent_prob must be a probability")
        if not 0.0 <= self.lr_min_ratio <= 1.0:
            raise ValueError("lr_min_ratio must lie in [0, 1]")
        if self.n_bones < 1:
            raise ValueError("need at least one bone")
        if self.prior not in PRIORS:
            raise ValueError(f"unknown prior {self.prior!r}; options: {PRIORS}")


@dataclass
class Dataset:
    rgb: np.ndarray  # (T, H, W, 3)
    sil: np.ndarray  # (T, H, W)
    feat: np.ndarray  # (T, H, W, D)
    flow: np.ndarray  # (T, H, W, 2), flow to pairs[t]
    pairs: list
    cam_quats: np.ndarray  # (T, 4)
    cam_trans: np.ndarray  # (T, 3)
    intrinsics: tuple
    near: float
    far: float
    scene: dict

    @property
    def n_frames(self) -> int:
        return self.rgb.shape[0]

    @property
    def width(self) -> int:
        return self.rgb.shape[2]

    @property
    def height(self) -> int:
        return self.rgb.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.feat.shape[-1]


def _frame_file(frames: pathlib.Path, t: int, suffix: str) -> pathlib.Path:
    p = frames / f"{t:04d}.{suffix}"
    if not p.exists():
        raise DatasetError(f"missing frame file {p.name}")
    return p


def load_dataset(path) -> Dataset:
    root = pathlib.Path(path)
    scene_path = root / "scene.json"
    if not scene_path.exists():
        raise DatasetError(f"no scene.json under {root}")
    import json
    try:
        scene = json.loads(scene_path.read_text())
    except json.JSONDecodeError as e:
        raise DatasetError(f"scene.json is not valid JSON: {e}") from e
    for key in ("intrinsics", "near", "far", "pairs", "camera", "spec"):
        if key not in scene:
            raise DatasetError(f"scene.json missing {key!r}")
    T = len(scene["pairs"])
    frames = root / "frames"
    rgb, sil, feat, flow = [], [], [], []
    for t in range(T):
        rgb.append(read_f32(_frame_file(frames, t, "rgb.f32")))
        sil.append(read_f32(_frame_file(frames, t, "sil.f32"))[..., 0])
        feat.append(read_f32(_frame_file(frames, t, "feat.f32")))
        flow.append(read_f32(_frame_file(frames, t, "flow.f32")))
    ds = Dataset(
        rgb=np.stack(rgb), sil=np.stack(sil), feat=np.stack(feat),
        flow=np.stack(flow),
        pairs=[int(p) for p in scene["pairs"]],
        cam_quats=np.asarray(scene["camera"]["quats"], dtype=np.float64),
        cam_trans=np.asarray(scene["camera"]["trans"], dtype=np.float64),
        intrinsics=tuple(scene["intrinsics"]),
        near=float(scene["near"]), far=float(scene["far"]), scene=scene)
    H, W = ds.height, ds.width
    if ds.rgb.shape != (T, H, W, 3) or ds.flow.shape != (T, H, W, 2):
        raise DatasetError("frame image shapes disagree")
    if int(ds.intrinsics[4]) != W or int(ds.intrinsics[5]) != H:
        raise DatasetError("intrinsics disagree with image size")
    if ds.cam_quats.shape != (T, 4) or ds.cam_trans.shape != (T, 3):
        raise DatasetError("camera trajectory shape mismatch")
    if not all(0 <= p < T for p in ds.pairs):
        raise DatasetError("pair ids out of range")
    return ds


@dataclass
class FittedModels:
    store: ParameterStore
    field: NetworkField
    skin: SkinningModel
    seq: MotionSequence
    near: float
    far: float
    meta: dict


def init_models(ds: Dataset, cfg: FitConfig) -> FittedModels:
    if cfg.field.feature_dim != ds.feature_dim:
        raise DatasetError(
            f"field produces {cfg.field.feature_dim} feature channels, "
            f"dataset has {ds.feature_dim}")
    store = ParameterStore()
    fld = NetworkField(store, cfg.field, seed=cfg.seed)
    skin = SkinningModel(store, cfg.n_bones,
                         init_centers=fibonacci_sphere(cfg.n_bones) * 0.3)
    seq = MotionSequence(store, ds.n_frames, cfg.n_bones, ds.intrinsics,
                         init_cam_quats=ds.cam_quats,
                         init_cam_trans=ds.cam_trans)
    meta = rebuild_meta(cfg, ds)
    return FittedModels(store, fld, skin, seq, ds.near, ds.far, meta)


def rebuild_meta(cfg: FitConfig, ds: Dataset) -> dict:
    """Everything `load_fitted` needs; no filesystem paths, so checkpoint
    bytes depend only on data and seeds."""
    return {
        "kind": "fit",
        "field": asdict(cfg.field),
        "n_bones": cfg.n_bones,
        "n_frames": ds.n_frames,
        "intrinsics": list(ds.intrinsics),
        "near": ds.near,
        "far": ds.far,
        "temperature": 0.1,
        "seed": cfg.seed,
        "weights": asdict(cfg.weights),
    }


def trainable_names(models: FittedModels, cfg: FitConfig) -> list:
    names = models.store.names()
    if cfg.learn_cameras:
        return names
    return [n for n in names if models.store.group_of(n) != "camera"]


def make_prior(cfg: FitConfig):
    if cfg.prior == "mock":
        return MockL2Prior(np.full((cfg.novel_rays, 3), 0.5))
    return None


def make_step_fn(ds: Dataset, models: FittedModels, cfg: FitConfig,
                 prior=None):
    grid = pixel_grid(ds.width, ds.height)
    n_pix = grid.shape[0]
    flat_rgb = ds.rgb.reshape(ds.n_frames, n_pix, 3)
    flat_sil = ds.sil.reshape(ds.n_frames, n_pix)
    flat_feat = ds.feat.reshape(ds.n_frames, n_pix, ds.feature_dim)
    flat_flow = ds.flow.reshape(ds.n_frames, n_pix, 2)
    fld, skin, seq = models.field, models.skin, models.seq
    # stratified depth jitter is rehashed per (seed, step, frame, pixel), so
    # training integrates over sample offsets without losing reproducibility;
    # it also lets the density sharpen past the per-step sample spacing
    kw = dict(near=ds.near, far=ds.far, jitter=True, seed=cfg.seed)
    # novel-view distance is part of the sampling configuration, frozen at
    # the initial camera scale so the objective stays a fixed function of
    # the parameters (||trans|| equals the center distance for look-at poses)
    novel_radius = float(np.linalg.norm(value(seq.cam_trans), axis=-1).mean())

    def step_fn(step: int) -> LossBreakdown:
        rng = np.random.default_rng((cfg.seed, step))
        t = int(rng.integers(ds.n_frames))
        with_flow = bool(rng.random() < cfg.adjacent_prob)
        idx = rng.choice(n_pix, size=min(cfg.batch_rays, n_pix), replace=False)
        pixels = grid[idx]

        flow_to = ds.pairs[t] if with_flow else None
        try:
            out = render_pixels(fld, seq, skin, t, pixels,
                                n_samples=cfg.n_samples, with_feature=True,
                                flow_to=flow_to, step=step, **kw)
        except DegenerateFlowError:
            out = render_pixels(fld, seq, skin, t, pixels,
                                n_samples=cfg.n_samples, with_feature=True,
                                step=step, **kw)  # drop the flow channel this step
        # datasets store opacity-weighted flow; compare in the same space
        flow_pred = None
        if out.flow is not None:
            flow_pred = ad.mul(ad.expand_dims(out.opacity, -1), out.flow)
        pred = PixelBatch(out.color, out.opacity, feature=out.feature,
                          flow=flow_pred)
        obs = PixelBatch(flat_rgb[t][idx], flat_sil[t][idx],
                         feature=flat_feat[t][idx],
                         flow=None if out.flow is None else flat_flow[t][idx])
        recon = loss_recon(pred, obs)
        cyc = loss_cycle(seq, skin, t, out.points, out.tau)
        surf = surface_penalty(fld, skin)
        smooth = loss_smooth(seq)

        ncyc = None
        if step % cfg.ncyc_every == 0:
            view = sample_novel_camera(seq.camera(t), rng,
                                       radius=novel_radius)
            nidx = rng.choice(n_pix, size=min(cfg.novel_rays, n_pix),
                              replace=False)
            nout = render_pixels(fld, seq, skin, t, grid[nidx],
                                 n_samples=cfg.sds_samples, cam=view.camera,
                                 with_feature=False, step=step, **kw)
            ncyc = loss_cycle_novel(seq, skin, t, nout.points, nout.tau,
                                    cam_pose=view.camera.pose)

        sds_val = 0.0
        if prior is not None and step % cfg.sds_every == 0:
            view = sample_novel_camera(seq.camera(t), rng,
                                       radius=novel_radius)
            sidx = rng.choice(n_pix, size=min(cfg.novel_rays, n_pix),
                              replace=False)
            sout = render_pixels(fld, seq, skin, t, grid[sidx],
                                 n_samples=cfg.sds_samples, cam=view.camera,
                                 with_feature=False, step=step, **kw)
            try:
                res = sds_step(prior, sout.color, view, models.store,
                               weight=cfg.weights.w_sds)
                sds_val = res.proxy
            except PriorError:
                sds_val = 0.0
        return combine_losses(cfg.weights, recon=recon, cyc=cyc, ncyc=ncyc,
                              surf=surf, smooth=smooth, sds=sds_val)

    return step_fn


def fit(dataset, cfg: FitConfig | None = None, out_dir=None):
    """Run the optimization; returns (models, trace).

    `dataset` is a directory or a loaded Dataset.  When `out_dir` is given,
    writes checkpoint.json and trace.jsonl there.
    """
    cfg = cfg or FitConfig()
    ds = dataset if isinstance(dataset, Dataset) else load_dataset(dataset)
    models = init_models(ds, cfg)
    step_fn = make_step_fn(ds, models, cfg, prior=make_prior(cfg))
    trace_path = None
    out = None
    if out_dir is not None:
        out = pathlib.Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        trace_path = out / "trace.jsonl"
    lr_fn = None
    if cfg.lr_min_ratio < 1.0:
        lr_fn = cosine_lr(cfg.lr, cfg.lr_min_ratio, cfg.steps)
    trace = optimize(models.store, step_fn, cfg.steps,
                     config=AdamConfig(lr=cfg.lr),
                     names=trainable_names(models, cfg),
                     trace_path=trace_path, lr_fn=lr_fn)
    if out is not None:
        models.store.save(out / "checkpoint.json", meta=models.meta)
    return models, trace


def load_fitted(path) -> FittedModels:
    """Rebuild models from a checkpoint written by `fit`."""
    loaded, meta = ParameterStore.load(path)
    for key in ("field", "n_bones", "n_frames", "intrinsics", "near", "far",
                "temperature", "seed"):
        if key not in meta:
            raise CheckpointError(f"checkpoint meta missing {key!r}")
    try:
        fcfg = FieldConfig(**meta["field"])
    except TypeError as e:
        raise CheckpointError(f"bad field config in checkpoint: {e}") from e
    store = ParameterStore()
    fld = NetworkField(store, fcfg, seed=int(meta["seed"]))
    skin = SkinningModel(store, int(meta["n_bones"]),
                         temperature=float(meta["temperature"]))
    seq = MotionSequence(store, int(meta["n_frames"]), int(meta["n_bones"]),
                         tuple(meta["intrinsics"]))
    for name in store.names():
        if name not in loaded.params:
            raise CheckpointError(f"checkpoint missing parameter {name!r}")
        src = loaded.tensor(name).data
        dst = store.tensor(name).data
        if src.shape != dst.shape:
            raise CheckpointError(
                f"parameter {name!r} has shape {src.shape}, expected {dst.shape}")
        dst[...] = src
    for name, arr in store.buffers.items():
        if name in loaded.buffers and loaded.buffers[name].shape == arr.shape:
            arr[...] = loaded.buffers[name]
    return FittedModels(store, fld, skin, seq, float(meta["near"]),
                        float(meta["far"]), meta)


def self_consistency_recon(ds: Dataset, batch_rays: int = 256,
                           seed: int = 0) -> float:
    """Recon loss of the generator's own ground truth on its own dataset.

    Guards the contract that synthesis and fitting share one rendering
    implementation: anything but a tiny float32 storage residue means the
    two paths diverged.
    """
    from .scene import gt_models_from_scene
    _, fld, skin, seq = gt_models_from_scene(ds.scene)
    spec_samples = int(ds.scene["spec"]["n_samples"])
    grid = pixel_grid(ds.width, ds.height)
    rng = np.random.default_rng(seed)
    total = 0.0
    with no_grad():
        for t in range(ds.n_frames):
            idx = rng.choice(grid.shape[0],
                             size=min(batch_rays, grid.shape[0]),
                             replace=False)
            out = render_pixels(fld, seq, skin, t, grid[idx],
                                n_samples=spec_samples, with_feature=True,
                                near=ds.near, far=ds.far, jitter=False)
            flow, _ = render_flow_pixels(fld, seq, skin, t, ds.pairs[t],
                                         grid[idx], n_samples=spec_samples,
                                         near=ds.near, far=ds.far,
                                         jitter=False)
            flow = value(out.opacity)[..., None] * value(flow)
            pred = PixelBatch(out.color, out.opacity, feature=out.feature,
                              flow=flow)
            obs = PixelBatch(
                ds.rgb[t].reshape(-1, 3)[idx],
                ds.sil[t].reshape(-1)[idx],
                feature=ds.feat[t].reshape(-1, ds.feature_dim)[idx],
                flow=ds.flow[t].reshape(-1, 2)[idx])
            total += float(value(loss_recon(pred, obs)))
    return total / ds.n_frames

"""Grouped trainable parameters and the JSON checkpoint format.

Every optimizable scalar lives in exactly one named parameter inside one of
three groups: "canonical" (field networks, density scale), "articulation"
(bones, per-frame bone transforms, delta-skinning net), "camera" (per-frame
camera poses).  Non-optimized constants (rest transforms, intrinsics) are
kept as buffers.  Checkpoints are a single JSON document with float64 payloads
base64-encoded little-endian, which round-trips bit-exactly.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor

GROUPS = ("canonical", "articulation", "camera")

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Malformed checkpoint document."""


def _encode(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii")


def _decode(payload: str, shape) -> np.ndarray:
    raw = base64.b64decode(payload.encode("ascii"))
    arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    return arr.reshape(shape)


@dataclass
class ParamSpec:
    group: str
    tensor: Tensor
    unit_quat: bool = False  # rows along the last axis renormalized after updates


@dataclass
class ParameterStore:
    params: dict = field(default_factory=dict)  # name -> ParamSpec
    buffers: dict = field(default_factory=dict)  # name -> ndarray

    def add(self, group: str, name: str, value, unit_quat: bool = False) -> Tensor:
        if group not in GROUPS:
            raise ValueError(f"unknown parameter group {group!r}")
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self.params[name] = ParamSpec(group, t, unit_quat)
        return t

    def add_buffer(self, name: str, value) -> np.ndarray:
        arr = np.array(value, dtype=np.float64)
        self.buffers[name] = arr
        return arr

    def tensor(self, name: str) -> Tensor:
        return self.params[name].tensor

    def group_of(self, name: str) -> str:
        return self.params[name].group

    def names(self, group: str | None = None) -> list:
        if group is None:
            return sorted(self.params)
        return sorted(n for n, s in self.params.items() if s.group == group)

    def zero_grads(self):
        for spec in self.params.values():
            spec.tensor.zero_grad()

    def grads(self) -> dict:
        """Current gradient per parameter (zeros where nothing reached)."""
        out = {}
        for name, spec in self.params.items():
            g = spec.tensor.grad
            out[name] = np.zeros_like(spec.tensor.data) if g is None else g.copy()
        return out

    def n_scalars(self) -> int:
        return sum(s.tensor.data.size for s in self.params.values())

    # -- serialization ---------------------------------------------------

    def state_dict(self, meta: dict | None = None) -> dict:
        groups: dict = {g: {} for g in GROUPS}
        for name, spec in sorted(self.params.items()):
            groups[spec.group][name] = {
                "shape": list(spec.tensor.data.shape),
                "data": _encode(spec.tensor.data),
                "unit_quat": spec.unit_quat,
            }
        return {
            "format_version": CHECKPOINT_VERSION,
            "groups": groups,
            "buffers": {
                name: {"shape": list(arr.shape), "data": _encode(arr)}
                for name, arr in sorted(self.buffers.items())
            },
            "meta": meta or {},
        }

    def save(self, path, meta: dict | None = None):
        with open(path, "w") as f:
            json.dump(self.state_dict(meta), f)

    @staticmethod
    def from_state_dict(doc: dict) -> tuple["ParameterStore", dict]:
        for key in ("format_version", "groups", "buffers"):
            if key not in doc:
                raise CheckpointError(f"missing checkpoint section {key!r}")
        if doc["format_version"] != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported format_version {doc['format_version']!r}")
        store = ParameterStore()
        for group, entries in doc["groups"].items():
            if group not in GROUPS:
                raise CheckpointError(f"unknown group {group!r}")
            for name, entry in entries.items():
                try:
                    arr = _decode(entry["data"], entry["shape"])
                except (KeyError, ValueError) as e:
                    raise CheckpointError(f"groups.{group}.{name}: {e}") from e
                store.add(group, name, arr, unit_quat=bool(entry.get("unit_quat", False)))
        for name, entry in doc["buffers"].items():
            try:
                store.add_buffer(name, _decode(entry["data"], entry["shape"]))
            except (KeyError, ValueError) as e:
                raise CheckpointError(f"buffers.{name}: {e}") from e
        return store, doc.get("meta", {})

    @staticmethod
    def load(path) -> tuple["ParameterStore", dict]:
        try:
            with open(path) as f:
                doc = json.load(f)
        except json.JSONDecodeError as e:
            raise CheckpointError(f"not valid JSON: {e}") from e
        return ParameterStore.from_state_dict(doc)

"""Adam-style gradient descent over a ParameterStore, plus the training
driver that evaluates a step function, checks term finiteness, backprops,
and appends a JSON-lines trace.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .losses import LossBreakdown
from .params import ParameterStore


class NonFiniteLossError(RuntimeError):
    """A loss term came back NaN or Inf; the step is aborted."""


@dataclass
class AdamConfig:
    lr: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class Adam:
    """First/second-moment descent with bias correction.

    Parameters without a gradient this step are skipped entirely (their
    moments and step counts do not advance).  Rows of unit-quaternion
    parameters are renormalized after each update so the store invariant
    survives optimization.
    """

    def __init__(self, store: ParameterStore, config: AdamConfig | None = None,
                 names=None):
        self.store = store
        self.cfg = config or AdamConfig()
        self.names = list(names) if names is not None else store.names()
        self.m = {n: np.zeros_like(store.tensor(n).data) for n in self.names}
        self.v = {n: np.zeros_like(store.tensor(n).data) for n in self.names}
        self.t = {n: 0 for n in self.names}

    def step(self):
        cfg = self.cfg
        for name in self.names:
            p = self.store.tensor(name)
            g = p.grad
            if g is None:
                continue
            self.t[name] += 1
            t = self.t[name]
            m = self.m[name]
            v = self.v[name]
            m += (1.0 - cfg.beta1) * (g - m)
            v += (1.0 - cfg.beta2) * (g * g - v)
            if cfg.lr == 0.0:
                continue
            m_hat = m / (1.0 - cfg.beta1 ** t)
            v_hat = v / (1.0 - cfg.beta2 ** t)
            p.data -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
            if self.store.params[name].unit_quat:
                p.data /= np.linalg.norm(p.data, axis=-1, keepdims=True)


def cosine_lr(lr: float, min_ratio: float, steps: int):
    """Schedule decaying lr to lr*min_ratio along a half cosine."""
    def at(step: int) -> float:
        if steps <= 1:
            return lr
        frac = 0.5 * (1.0 + np.cos(np.pi * step / (steps - 1)))
        return lr * (min_ratio + (1.0 - min_ratio) * frac)
    return at


def optimize(store: ParameterStore, step_fn, steps: int, *,
             config: AdamConfig | None = None, names=None,
             trace_path=None, lr_fn=None) -> list:
    """Run `steps` iterations of step_fn -> backward -> Adam update.

    step_fn(step) computes the losses for one iteration and returns a
    LossBreakdown; any gradient applied directly (the sds hook) must happen
    inside step_fn.  Gradients are zeroed before each call.  Every term is
    checked finite before the update; a NaN or Inf aborts with the term
    name.  lr_fn(step), when given, sets the learning rate each iteration.
    The trace (one dict per step) is returned and, when trace_path is
    given, appended there as JSON lines.
    """
    opt = Adam(store, config, names)
    trace = []
    out = open(trace_path, "a") if trace_path is not None else None
    try:
        for step in range(int(steps)):
            if lr_fn is not None:
                opt.cfg.lr = float(lr_fn(step))
            store.zero_grads()
            br = step_fn(step)
            for term in LossBreakdown.TERMS + ("total",):
                val = getattr(br, term)
                if not np.isfinite(val):
                    raise NonFiniteLossError(
                        f"loss term '{term}' is {val} at step {step}")
            if br.objective is not None:
                br.objective.backward()
            opt.step()
            rec = br.trace_record(step)
            trace.append(rec)
            if out is not None:
                out.write(json.dumps(rec) + "\n")
                out.flush()
    finally:
        if out is not None:
            out.close()
    return trace

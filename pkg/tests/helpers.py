"""Shared test utilities: finite-difference gradient checking."""

import numpy as np

from artirig.autodiff import Tensor, no_grad, value


def numeric_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function of one array."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def check_grads(build, leaves: dict, h: float = 1e-5, rtol: float = 1e-4, atol: float = 1e-7):
    """Compare reverse-mode gradients of ``build(leaves)`` against central FD.

    `build` maps a dict of name -> Tensor leaves to a scalar Tensor.  For each
    leaf the analytic gradient must match finite differences within `rtol`
    relative error, falling back to `atol` absolute where both are tiny.
    Returns the worst relative error seen.
    """
    tensors = {k: Tensor(np.array(v, dtype=np.float64), requires_grad=True) for k, v in leaves.items()}
    out = build(tensors)
    out.backward()

    worst = 0.0
    for name, t in tensors.items():
        assert t.grad is not None, f"no gradient reached leaf {name!r}"

        def scalar(arr, _name=name):
            with no_grad():
                probe = dict(tensors)
                probe[_name] = Tensor(arr)
                return float(build(probe).data)

        num = numeric_grad(scalar, t.grad * 0 + np.asarray(leaves[name], dtype=np.float64), h=h)
        ana = t.grad
        denom = np.maximum(np.abs(num), np.abs(ana))
        err = np.abs(ana - num)
        rel = np.where(denom > 1e-3, err / np.maximum(denom, 1e-300), 0.0)
        ok = (rel <= rtol) | (err <= atol)
        assert ok.all(), (
            f"gradient mismatch for {name!r}: max rel {rel.max():.3e}, "
            f"max abs {err.max():.3e}\nanalytic={ana}\nnumeric={num}"
        )
        worst = max(worst, float(rel.max()))
    return worst


def check_store_grads(store, loss_fn, h: float = 1e-5, rtol: float = 1e-4,
                      atol: float = 1e-7, names=None):
    """FD-check gradients of ``loss_fn()`` w.r.t. parameters held in a store.

    `loss_fn` rebuilds the graph from the store's current values each call.
    Same tolerance convention as check_grads.  Returns worst relative error.
    """
    store.zero_grads()
    loss_fn().backward()
    names = list(names) if names is not None else store.names()
    worst = 0.0
    for name in names:
        t = store.tensor(name)
        ana = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
        num = np.zeros_like(t.data)
        flat, nflat = t.data.ravel(), num.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            with no_grad():
                fp = float(value(loss_fn()))
            flat[i] = orig - h
            with no_grad():
                fm = float(value(loss_fn()))
            flat[i] = orig
            nflat[i] = (fp - fm) / (2.0 * h)
        denom = np.maximum(np.abs(num), np.abs(ana))
        err = np.abs(ana - num)
        rel = np.where(denom > 1e-3, err / np.maximum(denom, 1e-300), 0.0)
        ok = (rel <= rtol) | (err <= atol)
        assert ok.all(), (
            f"gradient mismatch for {name!r}: max rel {rel.max():.3e}, "
            f"max abs {err.max():.3e}"
        )
        worst = max(worst, float(rel.max()))
    return worst


def adam_minimize(store, loss_fn, names, steps: int, lr: float = 1e-2):
    """Bare-bones full-batch Adam for small test fits; returns final loss."""
    b1, b2, eps = 0.9, 0.999, 1e-8
    m = {n: np.zeros_like(store.tensor(n).data) for n in names}
    v = {n: np.zeros_like(store.tensor(n).data) for n in names}
    last = np.inf
    for t in range(1, steps + 1):
        store.zero_grads()
        loss = loss_fn()
        loss.backward()
        last = float(value(loss))
        for n in names:
            g = store.tensor(n).grad
            if g is None:
                continue
            m[n] = b1 * m[n] + (1 - b1) * g
            v[n] = b2 * v[n] + (1 - b2) * g * g
            mh = m[n] / (1 - b1**t)
            vh = v[n] / (1 - b2**t)
            store.tensor(n).data -= lr * mh / (np.sqrt(vh) + eps)
    return last

"""Central finite-difference checks of the tape's analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, no_grad


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float
    probes: int
    worst: tuple | None = None  # (input index, flat index, analytic, numeric)

    def ok(self, tol: float) -> bool:
        return self.max_rel_error <= tol


def rel_error(a: float, n: float, floor: float = 1e-8) -> float:
    """|a - n| / max(|a|, |n|), with a floor so two tiny values compare as equal."""
    return abs(a - n) / max(abs(a), abs(n), floor)


def check_gradients(fn, arrays, probes: int = 20, h: float = 1e-5, seed: int = 0,
                    name: str = "", tensors=None) -> GradCheckResult:
    """Compare backward() against central differences of L = sum(fn(*inputs) * R).

    ``arrays`` are the differentiable inputs (float64 numpy arrays). ``tensors``
    optionally lists extra leaf tensors (e.g. module parameters) probed as well;
    they are perturbed in place and restored. R is a fixed random projection so
    that every output element contributes.

    The relative error's denominator is floored at 1e-3 of the largest analytic
    gradient entry: coordinates whose true gradient is (near) zero otherwise
    compare finite-difference rounding noise against zero.
    """
    rng = np.random.default_rng(seed)
    inputs = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    leaves = inputs + list(tensors or [])
    for t in leaves:
        t.grad = None
    out = fn(*inputs)
    proj = rng.standard_normal(out.shape)

    def loss_value() -> float:
        with no_grad():
            return float(np.sum(fn(*[Tensor(t.data) for t in inputs]).data * proj))

    # seeding dL/dout = R directly keeps the projection itself off the tape
    out.backward(proj)
    scale = max((float(np.abs(t.grad).max()) for t in leaves if t.grad is not None and t.size), default=0.0)
    floor = max(1e-8, 1e-3 * scale)
    # every leaf is probed at least once
    n = max(probes, len(leaves))
    order = np.concatenate([rng.permutation(len(leaves)) for _ in range(-(-n // len(leaves)))])
    worst, max_err = None, 0.0
    for which in order[:n]:
        which = int(which)
        t = leaves[which]
        flat = int(rng.integers(t.size))
        view = t.data.reshape(-1)
        orig = view[flat]
        view[flat] = orig + h
        up = loss_value()
        view[flat] = orig - h
        down = loss_value()
        view[flat] = orig
        numeric = (up - down) / (2 * h)
        analytic = 0.0 if t.grad is None else float(t.grad.reshape(-1)[flat])
        err = rel_error(analytic, numeric, floor)
        if err >= max_err:
            max_err, worst = err, (which, flat, analytic, numeric)
    return GradCheckResult(name, max_err, n, worst)

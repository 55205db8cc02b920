"""L1 objective, Adam, milestone schedule, patch sampling and the training loop."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import InvalidConfigError, InvalidShapeError, NonFiniteLossError
from .imaging import ImageBuffer, bicubic_resize, mod_crop
from .tensor import ParamStore, Tensor

log = logging.getLogger(__name__)

FULL_MILESTONES = (250_000, 400_000, 450_000, 475_000)
FULL_TOTAL_STEPS = 500_000
BASE_LR = 2e-4


def l1_loss(pred: Tensor, target) -> Tensor:
    target = T.as_tensor(target, pred)
    if pred.shape != target.shape:
        raise InvalidShapeError(f"l1_loss: pred {pred.shape} vs target {target.shape}")
    return T.mean(T.abs_(pred - target))


def lr_at(step: int, base_lr: float, milestones) -> float:
    milestones = list(milestones)
    if any(b <= a for a, b in zip(milestones, milestones[1:])):
        raise InvalidConfigError(f"milestones must be strictly increasing, got {milestones}")
    drops = sum(1 for m in milestones if m <= step)
    return base_lr / 2 ** drops


def scaled_milestones(total_steps: int) -> list[int]:
    """Milestones at the same fractional positions when training for fewer steps."""
    if total_steps >= FULL_TOTAL_STEPS:
        return list(FULL_MILESTONES)
    out = []
    for m in FULL_MILESTONES:
        m = max(1, round(m * total_steps / FULL_TOTAL_STEPS))
        # very short runs would collapse neighbours; keep the list strictly increasing
        out.append(max(m, out[-1] + 1) if out else m)
    return out


# ---------------------------------------------------------------- Adam

@dataclass
class TrainState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    base_lr: float = BASE_LR
    milestones: list[int] = field(default_factory=lambda: list(FULL_MILESTONES))

    def save(self, path) -> None:
        arrays = {f"m/{k}": a for k, a in self.m.items()}
        arrays.update({f"v/{k}": a for k, a in self.v.items()})
        meta = np.array([self.step, self.beta1, self.beta2, self.eps, self.base_lr], dtype=np.float64)
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=meta, __milestones__=np.array(self.milestones, dtype=np.int64), **arrays)

    @classmethod
    def load(cls, path) -> TrainState:
        with np.load(path) as z:
            step, b1, b2, eps, lr = z["__meta__"]
            st = cls(int(step), beta1=float(b1), beta2=float(b2), eps=float(eps), base_lr=float(lr),
                     milestones=[int(m) for m in z["__milestones__"]])
            for key in z.files:
                if key.startswith("m/"):
                    st.m[key[2:]] = z[key]
                elif key.startswith("v/"):
                    st.v[key[2:]] = z[key]
        return st


def adam_step(params: ParamStore, state: TrainState, lr: float) -> None:
    """One bias-corrected Adam update in place; missing gradients count as zero."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1 - b1 ** t, 1 - b2 ** t
    for name, p in params:
        g = params.grad(name)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = (p.data - lr * update).astype(p.dtype)


# ---------------------------------------------------------------- data

def augment(lr: np.ndarray, hr: np.ndarray, hflip: bool, vflip: bool, rot: bool):
    """Apply the same flips / 90 degree rotation to an H x W x C pair."""
    def f(a):
        if hflip:
            a = a[:, ::-1]
        if vflip:
            a = a[::-1]
        if rot:
            a = np.rot90(a, 1, axes=(0, 1))
        return np.ascontiguousarray(a)

    return f(lr), f(hr)


@dataclass
class PatchSampler:
    """Aligned LR/HR patch pairs. ``patch_size`` is the LR side; HR side is scale times that."""

    images: list[ImageBuffer]
    scale: int
    patch_size: int = 64
    augment: bool = True
    seed: int = 0

    def __post_init__(self):
        self.pairs = []
        for i, img in enumerate(self.images):
            hr = mod_crop(img, self.scale)
            lr = bicubic_resize(hr, 1, self.scale)
            if min(lr.height, lr.width) < self.patch_size:
                log.warning("skipping image %d: LR %dx%d smaller than patch %d", i, lr.width,
                            lr.height, self.patch_size)
                continue
            self.pairs.append((lr.to_float(), hr.to_float()))
        if not self.pairs:
            raise InvalidShapeError("no image is large enough for the requested patch size")

    def sample(self, batch: int, step: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Deterministic in (seed, step); returns N x 3 x p x p and N x 3 x sp x sp."""
        rng = np.random.default_rng([self.seed, step])
        p, s = self.patch_size, self.scale
        lrs, hrs = [], []
        for _ in range(batch):
            lr, hr = self.pairs[int(rng.integers(len(self.pairs)))]
            top = int(rng.integers(lr.shape[0] - p + 1))
            left = int(rng.integers(lr.shape[1] - p + 1))
            lp = lr[top:top + p, left:left + p]
            hp = hr[top * s:(top + p) * s, left * s:(left + p) * s]
            flips = rng.random(3) < 0.5
            if self.augment:
                lp, hp = augment(lp, hp, *flips)
            lrs.append(lp.transpose(2, 0, 1))
            hrs.append(hp.transpose(2, 0, 1))
        return np.stack(lrs), np.stack(hrs)


def sample_batch(sampler: PatchSampler, batch: int, step: int = 0):
    return sampler.sample(batch, step)


# ---------------------------------------------------------------- loop

@dataclass
class TraceEntry:
    step: int
    lr: float
    l1: float

    def line(self) -> str:
        return f"{self.step}\t{self.lr!r}\t{self.l1!r}"


def _dump_nonfinite(dump_dir, step, lr, loss, params: ParamStore) -> Path | None:
    if dump_dir is None:
        return None
    path = Path(dump_dir) / f"nonfinite_step{step}.txt"
    lines = [f"step\t{step}", f"lr\t{lr!r}", f"loss\t{loss!r}"]
    for name, p in params:
        g = params.grad(name)
        lines.append(f"{name}\tmax|w|={np.abs(p.data).max():.4e}\tmax|g|={np.abs(g).max():.4e}"
                     f"\tfinite={bool(np.isfinite(p.data).all() and np.isfinite(g).all())}")
    path.write_text("\n".join(lines) + "\n")
    return path


def train_loop(model, sampler: PatchSampler, steps: int, *, batch: int = 1,
               state: TrainState | None = None, log_every: int = 1, trace_path=None,
               dump_dir=None) -> tuple[TrainState, list[TraceEntry]]:
    """Run Adam until ``state.step == steps``; resumes from ``state`` when given.

    The batch of step k depends only on (sampler.seed, k), so a resumed run
    retraces the uninterrupted one exactly."""
    params = model.params()
    if state is None:
        state = TrainState(milestones=scaled_milestones(steps))
    trace: list[TraceEntry] = []
    fh = open(trace_path, "a") if trace_path is not None else None
    try:
        while state.step < steps:
            step = state.step
            lr = lr_at(step, state.base_lr, state.milestones)
            lr_np, hr_np = sampler.sample(batch, step)
            params.zero_grad()
            loss = l1_loss(model(Tensor(lr_np, dtype=model.dtype)), hr_np.astype(model.dtype))
            value = loss.item()
            if not math.isfinite(value):
                dump = _dump_nonfinite(dump_dir, step, lr, value, params)
                raise NonFiniteLossError(f"non-finite loss {value} at step {step}"
                                         + (f"; diagnostics in {dump}" if dump else ""))
            loss.backward()
            adam_step(params, state, lr)
            if step % log_every == 0:
                entry = TraceEntry(step, lr, value)
                trace.append(entry)
                if fh is not None:
                    fh.write(entry.line() + "\n")
                    fh.flush()
    finally:
        if fh is not None:
            fh.close()
    return state, trace


def read_trace(path) -> list[TraceEntry]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            s, lr, l1 = line.split("\t")
            out.append(TraceEntry(int(s), float(lr), float(l1)))
    return out

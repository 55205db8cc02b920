"""Verification suites run by ``saat check``.

Each suite is a list of named checks returning ``(ok, detail)``. Gradient
checks run in float64 against central differences.
"""
from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .attention import OverlapCrossAttention, WindowAttention, oca_forward, wmsa_forward
from .blocks import (CWSAB, CWSAG, ECAB, MLP, OCAB, SMSA, SWSAB, SWSAG, Group, cwsab_forward,
                     eca_kernel_size, ecab_forward, mlp_forward, ocab_forward,
                     shifted_window_attention, smsa_forward, swsab_forward)
from .gradcheck import GradCheckResult, check_gradients
from .imaging import ImageBuffer, bicubic_resize, psnr, resize_weights, rgb_to_y, ssim
from .model import ModelConfig, build
from .tensor import Tensor
from .train import TrainState, adam_step, l1_loss, lr_at
from .windowing import (build_attn_mask, cyclic_shift, inverse_cyclic_shift,
                        relative_position_index, window_partition, window_reverse)

GRAD_TOL = 1e-5
E2E_GRAD_TOL = 1e-3
PROBES = 20

TOY_CONFIG = dict(scale=2, channels=32, heads=2, window_size=8, n_swsag=1, n_cwsag=1,
                  blocks_per_group=2, shifts=(0, 4))


def toy_config(**overrides) -> ModelConfig:
    return ModelConfig(**{**TOY_CONFIG, **overrides})


@dataclass
class Outcome:
    suite: str
    name: str
    ok: bool
    detail: str
    seconds: float = 0.0


def randomize(module, rng: np.random.Generator, scale: float = 0.3) -> None:
    """Replace every parameter with N(0, scale^2) noise so no path is degenerate."""
    for _, p in module.named_parameters():
        p.data = rng.standard_normal(p.shape).astype(p.dtype) * scale


# ---------------------------------------------------------------- gradient cases

def primitive_cases(seed: int = 0):
    """(op name, fn, input arrays) for every primitive on the tape."""
    rng = np.random.default_rng(seed)

    def r(*shape):
        return rng.standard_normal(shape)

    away = r(3, 4)
    away = np.where(np.abs(away) < 0.1, 0.5, away)
    return [
        ("add", lambda a, b: a + b, [r(2, 3, 4), r(3, 1)]),
        ("sub", lambda a, b: a - b, [r(2, 3), r(2, 3)]),
        ("mul", lambda a, b: a * b, [r(2, 3, 4), r(1, 3, 1)]),
        ("matmul", T.matmul, [r(2, 3, 4, 5), r(2, 3, 5, 2)]),
        ("linear", T.linear, [r(2, 3, 4), r(5, 4), r(5)]),
        ("reshape", lambda x: x.reshape(6, 4), [r(2, 3, 4)]),
        ("permute", lambda x: x.permute(2, 0, 1), [r(2, 3, 4)]),
        ("sum", lambda x: T.sum_(x, (0, 2)), [r(2, 3, 4)]),
        ("mean", lambda x: T.mean(x, 1, keepdims=True), [r(2, 3, 4)]),
        ("getitem", lambda x: x[:, 1:3, ::2], [r(2, 4, 5)]),
        ("take", lambda x: T.take(x, [[0, 2], [2, 1]], axis=0), [r(3, 4)]),
        ("concat", lambda a, b: T.concat([a, b], axis=1), [r(2, 3, 2), r(2, 1, 2)]),
        ("roll", lambda x: T.roll(x, (1, -2), (2, 3)), [r(1, 2, 4, 5)]),
        ("pad", lambda x: T.pad(x, [(1, 2), (0, 1)]), [r(1, 2, 3, 3)]),
        ("pad_reflect", lambda x: T.pad(x, [(0, 3), (2, 1)], mode="reflect"), [r(1, 2, 4, 3)]),
        ("abs", T.abs_, [away]),
        ("sigmoid", T.sigmoid, [r(3, 5) * 3]),
        ("gelu", T.gelu, [r(3, 5) * 2]),
        ("softmax", lambda x: T.softmax(x, axis=-1), [r(3, 6) * 2]),
        ("conv2d", lambda x, w, b: T.conv2d(x, w, b, padding=1), [r(2, 4, 5, 5), r(6, 4, 3, 3), r(6)]),
        ("conv2d_groups", lambda x, w: T.conv2d(x, w, padding=1, groups=2), [r(1, 4, 5, 5), r(6, 2, 3, 3)]),
        ("conv2d_depthwise", lambda x, w, b: T.conv2d(x, w, b, padding=1, groups=3),
         [r(2, 3, 5, 4), r(3, 1, 3, 3), r(3)]),
        ("conv2d_stride", lambda x, w: T.conv2d(x, w, stride=2, padding=1), [r(1, 2, 6, 5), r(3, 2, 3, 3)]),
        ("dwconv1d", T.dwconv1d, [r(2, 4, 7), r(4, 1, 3)]),
        ("layer_norm", lambda x, g, b: T.layer_norm(x, g, b, axis=1), [r(2, 5, 3, 3), r(5), r(5)]),
        ("layer_norm_last", lambda x, g, b: T.layer_norm(x, g, b, axis=-1), [r(2, 3, 6), r(6), r(6)]),
        ("group_norm", lambda x: T.group_norm(x, 4), [r(2, 8, 6)]),
        ("pixel_shuffle", lambda x: T.pixel_shuffle(x, 2), [r(1, 8, 2, 3)]),
        ("pixel_unshuffle", lambda x: T.pixel_unshuffle(x, 2), [r(1, 2, 4, 6)]),
        ("unfold2d", lambda x: T.unfold2d(x, 4, 2), [r(1, 2, 6, 6)]),
        ("avg_pool_axis", lambda x: T.avg_pool_axis(x, 3), [r(2, 3, 4, 5)]),
        ("global_avg_pool", T.global_avg_pool, [r(2, 3, 4, 5)]),
    ]


def _module_case(name, module, fn, x):
    return name, fn, [x], [p for _, p in module.named_parameters()]


def block_cases(seed: int = 0):
    """Composite layers at toy size with randomized parameters (float64)."""
    rng = np.random.default_rng(seed)
    f64 = np.float64
    C, G, heads = 8, 4, 2
    x4 = rng.standard_normal((1, C, 8, 8))
    cases = []

    attn = WindowAttention(4, 2, 2, rng, f64)
    randomize(attn, rng)
    mask = build_attn_mask(4, 4, 2, 1)
    cases.append(_module_case("wmsa", attn, lambda x: wmsa_forward(x, attn, mask),
                              rng.standard_normal((4, 4, 4))))

    sw = WindowAttention(C, heads, G, rng, f64)
    randomize(sw, rng)
    cases.append(_module_case("shifted_wmsa", sw, lambda x: shifted_window_attention(x, sw, 2),
                              rng.standard_normal((1, C, 6, 7))))

    oca = OverlapCrossAttention(4, 2, 2, 0.5, rng, f64)
    randomize(oca, rng)
    cases.append(_module_case("oca", oca, lambda x: oca_forward(x, oca), rng.standard_normal((1, 4, 4, 4))))

    smsa = SMSA(C, 4, (3, 5, 7, 9), rng, f64)
    randomize(smsa, rng)
    cases.append(_module_case("smsab", smsa, lambda x: smsa_forward(x, smsa), x4))

    ecab = ECAB(C, rng, f64)
    randomize(ecab, rng)
    cases.append(_module_case("ecab", ecab, lambda x: ecab_forward(x, ecab), x4))

    mlp = MLP(C, 2, rng, f64, conv_ffn=True)
    randomize(mlp, rng)
    cases.append(_module_case("convffn", mlp, lambda x: mlp_forward(x, mlp), rng.standard_normal((1, 5, 6, C))))

    plain = MLP(C, 2, rng, f64, conv_ffn=False)
    randomize(plain, rng)
    cases.append(_module_case("mlp", plain, lambda x: mlp_forward(x, plain), rng.standard_normal((1, 5, 6, C))))

    sw_blk = SWSAB(C, heads, G, rng, f64, alpha=0.5)
    randomize(sw_blk, rng)
    cases.append(_module_case("swsab", sw_blk, lambda x: swsab_forward(x, sw_blk, 2), x4))

    cw_blk = CWSAB(C, heads, G, rng, f64, beta=0.5)
    randomize(cw_blk, rng)
    cases.append(_module_case("cwsab", cw_blk, lambda x: cwsab_forward(x, cw_blk, 2), x4))

    ocab = OCAB(C, heads, G, 0.5, rng, f64)
    randomize(ocab, rng)
    cases.append(_module_case("ocab", ocab, lambda x: ocab_forward(x, ocab), x4))

    for kind in (SWSAG, CWSAG):
        grp = Group(kind, C, heads, G, (0, 2), rng, f64, alpha=0.5, beta=0.5)
        randomize(grp, rng, 0.2)
        cases.append(_module_case(kind.lower(), grp, grp, x4))
    return cases


def run_gradchecks(cases, tol: float, probes: int = PROBES, seed: int = 0):
    out = []
    for case in cases:
        name, fn, arrays = case[:3]
        tensors = case[3] if len(case) > 3 else None
        res = check_gradients(fn, arrays, probes=probes, seed=seed, name=name, tensors=tensors)
        out.append((res, tol))
    return out


def model_gradcheck(seed: int = 0, probes: int = PROBES) -> GradCheckResult:
    """End-to-end L1 loss of the toy model on an 8x8 input, float64."""
    rng = np.random.default_rng(seed)
    model = build(toy_config(), np.float64)
    randomize(model, rng, 0.05)
    x = rng.random((1, 3, 8, 8))
    target = rng.random((1, 3, 16, 16))
    params = [p for _, p in model.named_parameters()]

    def fn(inp):
        return l1_loss(model(inp), target)

    return check_gradients(fn, [x], probes=probes, seed=seed, name="saat_end_to_end", tensors=params)


def gradient_suite(seed: int = 0):
    """All gradient checks as (GradCheckResult, tolerance)."""
    res = run_gradchecks(primitive_cases(seed), GRAD_TOL, seed=seed)
    res += run_gradchecks(block_cases(seed), GRAD_TOL, seed=seed)
    res.append((model_gradcheck(seed), E2E_GRAD_TOL))
    return res


# ---------------------------------------------------------------- suites

def _grad_checks(cases_fn, tol):
    def make(case):
        def check():
            (res, _), = run_gradchecks([case], tol)
            return res.ok(tol), f"max rel err {res.max_rel_error:.2e} over {res.probes} probes (tol {tol:g})"
        return check
    return [(f"grad {case[0]}", make(case)) for case in cases_fn()]


def _check_windowing():
    rng = np.random.default_rng(0)
    for G in (1, 2, 4, 8, 16):
        for H in (G, 2 * G, 3 * G, 2 * G + 1):
            for W in (G, 2 * G, 3 * G, 2 * G + 1):
                x = Tensor(rng.standard_normal((1, 2, H, W)))
                if not np.array_equal(window_reverse(window_partition(x, G)).data, x.data):
                    return False, f"roundtrip failed for G={G} H={H} W={W}"
    return True, "partition/reverse bit-exact on the G x (H, W) grid"


def _check_masks():
    for s in (0, 8, 16, 24):
        if not np.array_equal(build_attn_mask(32, 32, 16, s), build_attn_mask(32, 32, 16, s % 16)):
            return False, f"mask({s}) != mask({s % 16})"
    if np.any(build_attn_mask(32, 32, 16, 0)):
        return False, "shift 0 mask not zero"
    return True, "mask(s) == mask(s mod 16) for s in 0, 8, 16, 24"


def _check_shift():
    x = Tensor(np.random.default_rng(1).standard_normal((1, 2, 32, 32)))
    ok = np.array_equal(inverse_cyclic_shift(cyclic_shift(x, 8), 8).data, x.data)
    ok &= np.array_equal(cyclic_shift(x, 32).data, x.data)
    return ok, "shift/unshift identity, full-period roll identity"


def _check_rpi():
    G = 2
    idx = relative_position_index(G)
    coords = [(i // G, i % G) for i in range(G * G)]
    brute = np.array([[(a[0] - b[0] + G - 1) * (2 * G - 1) + (a[1] - b[1] + G - 1)
                       for b in coords] for a in coords])
    return np.array_equal(idx, brute), "G=2 index table matches enumeration"


def _check_oca_mu0():
    rng = np.random.default_rng(0)
    C, G = 8, 4
    wa = WindowAttention(C, 2, G, rng, np.float64)
    randomize(wa, rng)
    oca = OverlapCrossAttention(C, 2, G, 0.0, rng, np.float64)
    map_wmsa_to_oca(wa, oca)
    x = rng.standard_normal((1, C, 8, 8))
    ref = window_reverse(window_partition(Tensor(x), G),
                         wmsa_forward(window_partition(Tensor(x), G).windows, wa))
    err = float(np.abs(oca_forward(Tensor(x), oca).data - ref.data).max())
    return err <= 1e-6, f"max |OCA(mu=0) - W-MSA| = {err:.2e}"


def map_wmsa_to_oca(wa: WindowAttention, oca: OverlapCrossAttention) -> None:
    """Copy window-attention weights into an overlap attention with the same G."""
    C = wa.dim
    oca.q.weight.data = wa.qkv.weight.data[:C].copy()
    oca.q.bias.data = wa.qkv.bias.data[:C].copy()
    oca.kv.weight.data = wa.qkv.weight.data[C:].copy()
    oca.kv.bias.data = wa.qkv.bias.data[C:].copy()
    oca.proj.weight.data = wa.proj.weight.data.copy()
    oca.proj.bias.data = wa.proj.bias.data.copy()
    oca.rel_bias.data = wa.rel_bias.data.copy()


def _check_attn_rows():
    rng = np.random.default_rng(0)
    wa = WindowAttention(4, 2, 2, rng, np.float64)
    randomize(wa, rng)
    mask = build_attn_mask(4, 4, 2, 1)
    _, attn = wmsa_forward(Tensor(rng.standard_normal((4, 4, 4))), wa, mask, return_attn=True)
    err = float(np.abs(attn.data.sum(-1) - 1).max())
    return err <= 1e-6, f"max |row sum - 1| = {err:.2e}"


def _check_degenerations():
    rng = np.random.default_rng(0)
    C, G = 8, 4
    x = Tensor(rng.standard_normal((1, C, 8, 8)))
    sw = SWSAB(C, 2, G, np.random.default_rng(1), alpha=0.0)
    cw = CWSAB(C, 2, G, np.random.default_rng(2), beta=0.0)
    for blk in (sw, cw):
        randomize(blk, rng)
    # share the plain-block parameters between the two
    cw.norm1, cw.attn, cw.norm3, cw.mlp = sw.norm1, sw.attn, sw.norm2, sw.mlp
    a = swsab_forward(x, sw, 2)
    b = swsab_forward(x, sw, 2, use_branch=False)
    c = cwsab_forward(x, cw, 2)
    d = cwsab_forward(x, cw, 2, use_branch=False)
    ok = np.array_equal(a.data, b.data) and np.array_equal(c.data, d.data) and np.array_equal(a.data, c.data)
    return ok, "alpha=0 / beta=0 blocks equal the plain window block bit-exactly"


def _check_convffn():
    rng = np.random.default_rng(0)
    conv = MLP(8, 2, np.random.default_rng(3), conv_ffn=True)
    randomize(conv, rng)
    plain = MLP(8, 2, np.random.default_rng(3), conv_ffn=False)
    plain.fc1, plain.fc2 = conv.fc1, conv.fc2
    conv.dwconv.weight.data[:] = 0
    conv.dwconv.bias.data[:] = 0
    x = Tensor(rng.standard_normal((1, 4, 4, 8)).astype(np.float32))
    return np.array_equal(mlp_forward(x, conv).data, mlp_forward(x, plain).data), \
        "ConvFFN with zero depthwise conv equals plain MLP"


def _check_smsa_zero():
    rng = np.random.default_rng(0)
    p = SMSA(32, 4, (3, 5, 7, 9), rng)
    for w in p.convs:
        w.data[:] = 0
    x = Tensor(rng.standard_normal((2, 32, 16, 24)).astype(np.float32))
    err = float(np.abs(smsa_forward(x, p).data - 0.25 * x.data).max())
    return err <= 1e-6, f"max |SMSA(x) - 0.25 x| = {err:.2e}"


def _check_eca_table():
    got = [eca_kernel_size(c) for c in (2, 16, 64, 180, 256)]
    ks = [eca_kernel_size(c) for c in range(1, 4097)]
    ok = got == [1, 3, 3, 5, 5] and all(k % 2 == 1 and k >= 1 for k in ks) and \
        all(b >= a for a, b in zip(ks, ks[1:]))
    return ok, f"k(2,16,64,180,256) = {got}"


def _check_model_shapes():
    for s in (2, 3, 4):
        m = build(toy_config(scale=s, n_swsag=1, n_cwsag=0, blocks_per_group=1, shifts=(4,)))
        for h, w in ((17, 24), (24, 17)):
            with T.no_grad():
                y = m(Tensor(np.random.default_rng(0).random((1, 3, h, w))))
            if y.shape != (1, 3, s * h, s * w):
                return False, f"x{s} {h}x{w} -> {y.shape}"
    return True, "output = input x scale for x2, x3, x4 on 17x24 / 24x17"


def _check_checkpoint():
    from .checkpoint import encode, load, save
    m = build(toy_config())
    x = Tensor(np.random.default_rng(0).random((1, 3, 8, 8)))
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "m.ckpt"
        save(m, path)
        m2 = load(path)
        with T.no_grad():
            same = np.array_equal(m(x).data, m2(x).data)
        same &= encode(m2) == path.read_bytes()
    return same, "save -> load -> forward bit-identical; save -> load -> save byte-identical"


def _check_schedule():
    ms = [250_000, 400_000, 450_000, 475_000]
    got = [lr_at(s, 2e-4, ms) for s in (0, 250_000, 480_000)]
    return got == [2e-4, 1e-4, 1.25e-5], f"lr at 0 / 250K / 480K = {got}"


def _check_adam_zero():
    p = Tensor(np.ones(3), requires_grad=True)
    store = T.ParamStore([("p", p)])
    adam_step(store, TrainState(), 1e-3)
    return np.array_equal(p.data, np.ones(3)), "zero gradient leaves parameters unchanged"


def _check_metrics():
    a = np.full((16, 16, 3), 100, np.uint8)
    b = a + 1
    p = psnr(a, b, y_only=False)
    s = ssim(a, a)
    ok = abs(p - 48.1308) <= 1e-3 and abs(s - 1.0) <= 1e-9 and math.isinf(psnr(a, a))
    return ok, f"psnr(diff 1) = {p:.4f}, ssim(a, a) = {s}"


def _check_bicubic():
    worst = 0.0
    for n_in, n_out, sc in ((64, 32, 0.5), (32, 64, 2.0), (30, 10, 1 / 3), (17, 51, 3.0)):
        _, w = resize_weights(n_in, n_out, sc)
        worst = max(worst, float(np.abs(w.sum(1) - 1).max()))
    const = ImageBuffer(np.full((12, 12, 3), 77, np.uint8))
    ok = worst <= 1e-9 and np.all(bicubic_resize(const, 1, 2).pixels == 77)
    ok &= abs(rgb_to_y(np.full((1, 1, 3), 255.0))[0, 0] - 235) < 1e-9
    return ok, f"max |sum(weights) - 1| = {worst:.1e}"


SUITES = {
    "tensor-engine": lambda: _grad_checks(primitive_cases, GRAD_TOL),
    "windowing": lambda: [("partition roundtrip", _check_windowing), ("mask mod G", _check_masks),
                          ("cyclic shift", _check_shift), ("relative index", _check_rpi)],
    "attention-core": lambda: [("oca mu=0 == wmsa", _check_oca_mu0), ("attention rows", _check_attn_rows)]
    + [c for c in _grad_checks(block_cases, GRAD_TOL) if c[0] in ("grad wmsa", "grad shifted_wmsa", "grad oca")],
    "saat-blocks": lambda: [("alpha/beta = 0", _check_degenerations), ("convffn degeneration", _check_convffn),
                            ("smsa zero kernels", _check_smsa_zero), ("eca kernel table", _check_eca_table)]
    + [c for c in _grad_checks(block_cases, GRAD_TOL) if c[0] not in ("grad wmsa", "grad shifted_wmsa", "grad oca")],
    "saat-model": lambda: [("shape contract", _check_model_shapes), ("checkpoint roundtrip", _check_checkpoint),
                           ("grad end-to-end", lambda: (lambda r: (r.ok(E2E_GRAD_TOL),
                            f"max rel err {r.max_rel_error:.2e} (tol {E2E_GRAD_TOL:g})"))(model_gradcheck()))],
    "train-optim": lambda: [("lr schedule", _check_schedule), ("adam zero grad", _check_adam_zero)],
    "image-toolkit": lambda: [("metric oracles", _check_metrics), ("bicubic", _check_bicubic)],
}


def run(only: str | None = None, report=print, stop_on_failure: bool = True) -> list[Outcome]:
    if only is not None and only not in SUITES:
        raise KeyError(f"unknown suite {only!r}; choose from {', '.join(SUITES)}")
    outcomes = []
    for suite, make in SUITES.items():
        if only is not None and suite != only:
            continue
        for name, check in make():
            t0 = time.perf_counter()
            try:
                ok, detail = check()
            except Exception as e:  # a crashing check is a failing check
                ok, detail = False, f"{type(e).__name__}: {e}"
            o = Outcome(suite, name, bool(ok), detail, time.perf_counter() - t0)
            outcomes.append(o)
            if report is not None:
                report(f"[{'PASS' if o.ok else 'FAIL'}] {suite}: {name} - {detail}")
            if not o.ok and stop_on_failure:
                return outcomes
    return outcomes

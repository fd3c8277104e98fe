"""Verification suites: gradient oracles, scalar oracles, invariants and reproduced figures.

Every check returns a :class:`CheckResult`; a suite is a list of check callables
and ``run_suites`` collects them into one :class:`VerificationReport`.
"""
from __future__ import annotations

import logging
import tempfile
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from crosscbam.data.augment import augment, hflip
from crosscbam.data.checkpoint import load_checkpoint, save_checkpoint
from crosscbam.data.synthetic import gen_synthetic
from crosscbam.errors import CrossCbamError
from crosscbam.models.data import SyntheticSceneSpec
from crosscbam.models.network_config import NetworkConfig
from crosscbam.models.reports import CheckResult, VerificationReport
from crosscbam.models.training import AugmentConfig, LossConfig, OptimConfig
from crosscbam.nn import functional as F
from crosscbam.nn import reference as ref
from crosscbam.nn.attention import Ccbam, SEBlock
from crosscbam.nn.backbone import BackboneSpec, StdcBackbone, stdc_block_channels
from crosscbam.nn.gradcheck import GradcheckResult, check_gradients
from crosscbam.nn.losses import composite_loss, cross_entropy, focal_loss
from crosscbam.nn.network import ModelOutput, build_network
from crosscbam.nn.optim import poly_lr, sgd_step
from crosscbam.nn.params import BatchNormParams, ConvParams, Mode
from crosscbam.nn.se_aspp import SeAspp, SeAsppConfig, se_aspp_param_count
from crosscbam.nn.tensor import Precision, Tensor
from crosscbam.services.metrics import ConfusionMatrix
from crosscbam.services.profiler import DILATION_REFERENCE, count_params, flop_report

Check = Callable[[], CheckResult]
CaseBuilder = Callable[[np.random.Generator], Tuple[Callable[[], Tensor], Dict[str, Tensor]]]

ORACLE_RTOL = 1e-6


def _t(rng: np.random.Generator, *shape: int, scale: float = 1.0) -> Tensor:
    return Tensor(rng.standard_normal(shape) * scale, dtype=Precision.DOUBLE)


def _scalar(build: Callable[[], Tensor], rng: np.random.Generator) -> Callable[[], Tensor]:
    """Scalar ``sum(out * R)`` for a fixed random ``R`` so every output coordinate matters."""
    weights: Dict[str, np.ndarray] = {}

    def f() -> Tensor:
        out = build()
        if "R" not in weights:
            weights["R"] = rng.standard_normal(out.shape)
        return F.reduce_sum(F.mul(out, Tensor(weights["R"], dtype=Precision.DOUBLE)))

    return f


# ---------------------------------------------------------------------------
# Per-op gradient cases (double precision, small random geometry)
# ---------------------------------------------------------------------------

def _case_conv(rng):
    k = int(rng.choice([1, 3]))
    s = int(rng.choice([1, 2]))
    d = int(rng.integers(1, 4)) if k == 3 else 1
    c, oc = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    size = d * (k - 1) + int(rng.integers(3, 6))
    x, w, b = _t(rng, 2, c, size, size), _t(rng, oc, c, k, k), _t(rng, oc)
    p = ConvParams(w, b, stride=s, padding=d * (k - 1) // 2, dilation=d)
    return _scalar(lambda: F.conv2d(x, p), rng), {"x": x, "weight": w, "bias": b}


def _case_bn(mode: Mode):
    def build(rng):
        x, g, b = _t(rng, 3, 2, 3, 3), _t(rng, 2), _t(rng, 2)
        p = BatchNormParams(g, b, rng.standard_normal(2), rng.random(2) + 0.5, mode=mode)
        return _scalar(lambda: F.batch_norm(x, p), rng), {"x": x, "gamma": g, "beta": b}

    return build


def _case_pool(kind: str):
    def build(rng):
        x = _t(rng, 1, 2, 7, 7)
        return _scalar(lambda: F.pool2d(x, kind, 3, 2, 1), rng), {"x": x}

    return build


def _case_unary(fn):
    def build(rng):
        x = _t(rng, 2, 3, 4, 4)
        return _scalar(lambda: fn(x), rng), {"x": x}

    return build


def _case_resize(rng):
    x = _t(rng, 1, 2, int(rng.integers(2, 5)), int(rng.integers(2, 5)))
    oh, ow = int(rng.integers(2, 9)), int(rng.integers(2, 9))
    return _scalar(lambda: F.bilinear_resize(x, oh, ow), rng), {"x": x}


def _case_elementwise(kind: str):
    def build(rng):
        a = _t(rng, 2, 3, 4, 4)
        shape = [(2, 3, 4, 4), (2, 3, 1, 1), (2, 1, 4, 4)][int(rng.integers(0, 3))]
        b = _t(rng, *shape)
        return _scalar(lambda: F.elementwise(a, b, kind), rng), {"a": a, "b": b}

    return build


def _case_concat(rng):
    xs = [_t(rng, 1, int(rng.integers(1, 4)), 3, 3) for _ in range(3)]
    return _scalar(lambda: F.concat_channels(xs), rng), {f"x{i}": x for i, x in enumerate(xs)}


def _case_slice(rng):
    x = _t(rng, 1, 5, 3, 3)
    return _scalar(lambda: F.slice_channels(x, 1, 4), rng), {"x": x}


def _module_params(module) -> Dict[str, Tensor]:
    return dict(module.named_parameters())


def _case_se(rng):
    block = SEBlock(16, rng=rng, dtype=Precision.DOUBLE)
    x = _t(rng, 2, 16, 3, 3)
    return _scalar(lambda: block(x), rng), {"x": x, **_module_params(block)}


def _case_ccbam(rng):
    block = Ccbam(16, rng=rng, dtype=Precision.DOUBLE)
    high, low = _t(rng, 1, 16, 3, 4), _t(rng, 1, 16, 3, 4)
    return _scalar(lambda: block(high, low), rng), {"high": high, "low": low, **_module_params(block)}


def _case_loss(gamma: float):
    def build(rng):
        logits = _t(rng, 2, 4, 3, 3, scale=2.0)
        target = rng.integers(0, 4, size=(2, 3, 3))
        target[0, 0, 0] = 255
        return (lambda: focal_loss(logits, target, gamma)), {"logits": logits}

    return build


def _case_composite(rng):
    logits, aux = _t(rng, 1, 3, 4, 4), _t(rng, 1, 3, 4, 4)
    target = rng.integers(0, 3, size=(1, 4, 4))
    cfg = LossConfig(alpha=0.6, gamma=2.0)
    return (lambda: composite_loss(ModelOutput(logits, aux), target, cfg)), {"logits": logits, "aux": aux}


OP_CASES: Dict[str, CaseBuilder] = {
    "conv2d": _case_conv,
    "batch_norm_train": _case_bn(Mode.TRAIN),
    "batch_norm_infer": _case_bn(Mode.INFER),
    "max_pool": _case_pool("max"),
    "avg_pool": _case_pool("avg"),
    "global_max_pool": _case_unary(lambda x: F.global_pool(x, "max")),
    "global_avg_pool": _case_unary(lambda x: F.global_pool(x, "avg")),
    "channel_max": _case_unary(lambda x: F.channelwise_reduce(x, "max")),
    "channel_avg": _case_unary(lambda x: F.channelwise_reduce(x, "avg")),
    "bilinear_resize": _case_resize,
    "add": _case_elementwise("add"),
    "mul": _case_elementwise("mul"),
    "relu": _case_unary(F.relu),
    "sigmoid": _case_unary(F.sigmoid),
    "concat": _case_concat,
    "slice": _case_slice,
    "se_block": _case_se,
    "ccbam": _case_ccbam,
    "cross_entropy": _case_loss(0.0),
    "focal_loss": _case_loss(2.0),
    "composite_loss": _case_composite,
}


def gradcheck_op(name: str, seed: int) -> GradcheckResult:
    rng = np.random.default_rng(seed)
    f, inputs = OP_CASES[name](rng)
    return check_gradients(f, inputs, name=f"{name}[seed={seed}]", rng=rng)


def gradcheck_network(
    cfg: Optional[NetworkConfig] = None,
    input_shape: Sequence[int] = (1, 3, 64, 128),
    n_params: int = 200,
    seed: int = 0,
    mode: Mode = Mode.INFER,
) -> GradcheckResult:
    """Composite loss of a full forward, checked on a random sample of parameter coordinates.

    In infer mode batch norm uses randomized running statistics. In train mode it
    normalizes with batch statistics and the loss includes the aux head term, whose
    parameters are always among the sampled ones. Give train mode a batch of at
    least two: at 1/32 scale a single image leaves few values per channel.
    """
    cfg = cfg or NetworkConfig(num_classes=5)
    rng = np.random.default_rng(seed)
    model = build_network(cfg, seed=seed, dtype=Precision.DOUBLE)
    for name, buffer in model.named_buffers():
        if name.endswith("running_mean"):
            buffer[...] = 0.1 * rng.standard_normal(buffer.shape)
        else:
            buffer[...] = 0.5 + rng.random(buffer.shape)
    model.set_mode(mode)
    image = Tensor(rng.random(tuple(input_shape)), dtype=Precision.DOUBLE)
    target = rng.integers(0, cfg.num_classes, size=(input_shape[0],) + tuple(input_shape[2:]))
    loss_cfg = LossConfig(alpha=0.5)

    def f() -> Tensor:
        return composite_loss(model(image), target, loss_cfg)

    params = dict(model.named_parameters())
    names = list(params)
    sizes = np.array([params[n].size for n in names])
    picks = rng.choice(sizes.sum(), size=min(n_params, int(sizes.sum())), replace=False)
    owners = np.searchsorted(np.cumsum(sizes), picks, side="right")
    chosen = {names[i]: params[names[i]] for i in sorted(set(owners.tolist()))}
    if mode is Mode.TRAIN and cfg.aux_head:
        chosen.update({n: params[n] for n in names if n.startswith("aux.")})
    per_input = max(1, n_params // max(1, len(chosen)))
    label = "network" if mode is Mode.INFER else f"network[{mode.value}]"
    return check_gradients(f, chosen, name=label, max_per_input=per_input, rng=rng)


# ---------------------------------------------------------------------------
# Check helpers
# ---------------------------------------------------------------------------

def _check(suite: str, name: str, fn: Callable[[], Tuple[bool, str, Dict]]) -> Check:
    def run() -> CheckResult:
        try:
            passed, details, metrics = fn()
        except CrossCbamError as exc:
            return CheckResult(suite, name, False, f"{type(exc).__name__}: {exc}")
        return CheckResult(suite, name, bool(passed), details, metrics)

    run.__name__ = name
    return run


def _close(a: np.ndarray, b: np.ndarray, rtol: float = ORACLE_RTOL, atol: float = 1e-12) -> Tuple[bool, float]:
    err = float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1.0))) if np.size(a) else 0.0
    return bool(np.allclose(a, b, rtol=rtol, atol=atol)), err


def gradcheck_suite(seeds: int = 20, ops: Optional[Sequence[str]] = None) -> List[Check]:
    checks = []
    for name in ops or OP_CASES:
        def fn(name=name):
            results = [gradcheck_op(name, seed) for seed in range(seeds)]
            failed = [r for r in results if not r.passed]
            worst = max(r.max_rel_error for r in results)
            details = f"{len(results) - len(failed)}/{len(results)} seeds passed, worst rel err {worst:.2e}"
            if failed:
                details += f"; first failure {failed[0].name}: {failed[0].failures[0]}"
            return not failed, details, {"seeds": seeds, "max_rel_error": worst}

        checks.append(_check("gradcheck", name, fn))
    return checks


def oracle_suite(seed: int = 0) -> List[Check]:
    rng = np.random.default_rng(seed)

    def conv_sweep():
        worst = 0.0
        for k in (1, 3):
            for s in (1, 2):
                for d in (1, 2, 3, 4, 5, 6):
                    size = d * (k - 1) + 4
                    x, w, b = rng.standard_normal((1, 2, size, size)), rng.standard_normal((3, 2, k, k)), rng.standard_normal(3)
                    pad = d * (k - 1) // 2
                    got = F.conv2d(Tensor(x, dtype="float64"), ConvParams(Tensor(w, dtype="float64"), Tensor(b, dtype="float64"), s, pad, d)).data
                    ok, err = _close(got, ref.conv2d_ref(x, w, b, s, pad, d))
                    worst = max(worst, err)
                    if not ok:
                        return False, f"k={k} s={s} d={d} rel err {err:.2e}", {}
        return True, f"24 geometries, worst rel err {worst:.2e}", {"max_rel_error": worst}

    def pool_sweep():
        for kind in ("max", "avg"):
            for k, s, p in ((3, 2, 1), (2, 2, 0), (3, 1, 1)):
                x = rng.standard_normal((1, 3, 7, 7))
                ok, err = _close(F.pool2d(Tensor(x, dtype="float64"), kind, k, s, p).data, ref.pool2d_ref(x, kind, k, s, p))
                if not ok:
                    return False, f"{kind} k={k} s={s} p={p} rel err {err:.2e}", {}
        return True, "6 geometries match", {}

    def bilinear():
        x = np.array([[[[0.0, 1.0], [2.0, 3.0]]]])
        ok, err = _close(F.bilinear_resize(Tensor(x, dtype="float64"), 4, 4).data, ref.bilinear_ref(x, 4, 4), rtol=0.0, atol=0.0)
        y = rng.standard_normal((1, 2, 3, 5))
        ok2, err2 = _close(F.bilinear_resize(Tensor(y, dtype="float64"), 7, 4).data, ref.bilinear_ref(y, 7, 4))
        return ok and ok2, f"2x2->4x4 exact={ok}, 3x5->7x4 rel err {err2:.2e}", {}

    def attention():
        block = Ccbam(32, rng=rng, dtype=Precision.DOUBLE)
        high, low = rng.standard_normal((2, 32, 3, 4)), rng.standard_normal((2, 32, 3, 4))
        got = block(Tensor(high, dtype="float64"), Tensor(low, dtype="float64")).data

        def ca(m):
            return {"w1": m.fc1.params.weight.data, "b1": m.fc1.params.bias.data,
                    "w2": m.fc2.params.weight.data, "b2": m.fc2.params.bias.data}

        def sa(m):
            return {"weight": m.fuse.params.weight.data, "bias": m.fuse.params.bias.data}

        expected = ref.ccbam_ref(high, low, {
            "ca_high": ca(block.ca_high), "ca_low": ca(block.ca_low),
            "sa_high": sa(block.sa_high), "sa_low": sa(block.sa_low),
        })
        ok, err = _close(got, expected)
        return ok, f"fusion vs scalar transcription rel err {err:.2e}", {"max_rel_error": err}

    def se():
        block = SEBlock(32, rng=rng, dtype=Precision.DOUBLE)
        x = rng.standard_normal((2, 32, 3, 3))
        expected = ref.se_block_ref(x, {"w1": block.squeeze.params.weight.data, "b1": block.squeeze.params.bias.data,
                                        "w2": block.excite.params.weight.data, "b2": block.excite.params.bias.data})
        ok, err = _close(block(Tensor(x, dtype="float64")).data, expected)
        return ok, f"rel err {err:.2e}", {}

    def losses():
        logits = rng.standard_normal((2, 3, 2, 2))
        target = rng.integers(0, 3, size=(2, 2, 2))
        ce = cross_entropy(Tensor(logits, dtype="float64"), target).item()
        fl = focal_loss(Tensor(logits, dtype="float64"), target, 2.0).item()
        ok = abs(ce - ref.pixel_losses_ref(logits, target, 0.0)) < 1e-7
        ok &= abs(fl - ref.pixel_losses_ref(logits, target, 2.0)) < 1e-7
        return ok, f"CE {ce:.6f} FL {fl:.6f}", {}

    return [
        _check("oracles", "conv2d_geometry_sweep", conv_sweep),
        _check("oracles", "pool2d", pool_sweep),
        _check("oracles", "bilinear_half_pixel", bilinear),
        _check("oracles", "ccbam_fuse", attention),
        _check("oracles", "se_block", se),
        _check("oracles", "pixel_losses", losses),
    ]


def figures_suite(flops: bool = True) -> List[Check]:
    """Reproduces the reference parameter figures and the FLOP ordering of the dilation grid."""

    def channel_rule():
        cases = {(256, 4): [128, 64, 32, 32], (64, 2): [32, 32], (1024, 4): [512, 256, 128, 128]}
        ok = all(stdc_block_channels(*k) == v for k, v in cases.items())
        return ok, "block widths follow the halving rule", {}

    def total_params():
        params = count_params(build_network(NetworkConfig()))
        ok = abs(params / 1e6 - 12.21) <= 0.1 * 12.21
        return ok, f"{params} parameters ({params / 1e6:.2f}M) against 12.21M +/-10%", {"params": params}

    def dilation_deltas():
        base = se_aspp_param_count(SeAsppConfig(dilations=(1, 3)))
        three = se_aspp_param_count(SeAsppConfig(dilations=(1, 3, 5))) - base
        swap = se_aspp_param_count(SeAsppConfig(dilations=(2, 4))) - base
        ok = three == 9 * 1024 * 256 + 2 * 256 and abs(three / 1e6 - (14.57 - 12.21)) < 0.01
        ok &= swap == 8 * 1024 * 256 and abs(swap / 1e6 - (14.31 - 12.21)) < 0.01
        return ok, f"(1,3,5)-(1,3)={three}, (2,4)-(1,3)={swap}", {"delta_135": three, "delta_24": swap}

    def closed_form():
        cfg = SeAsppConfig()
        module = SeAspp(cfg, rng=np.random.default_rng(0))
        return count_params(module) == se_aspp_param_count(cfg), f"{se_aspp_param_count(cfg)} parameters", {}

    def variants():
        m = count_params(StdcBackbone(BackboneSpec.for_variant("stdc1"), rng=np.random.default_rng(0)))
        l = count_params(StdcBackbone(BackboneSpec.for_variant("stdc2"), rng=np.random.default_rng(0)))
        return l > m, f"STDC1 {m}, STDC2 {l}", {}

    def flop_order():
        reports = {d: flop_report(build_network(NetworkConfig(dilations=d)), reference_g=DILATION_REFERENCE[d][1])
                   for d in DILATION_REFERENCE}
        macs = {d: r.macs for d, r in reports.items()}
        ok = macs[(1, 3)] < macs[(2, 4)] == macs[(3, 5)] < macs[(1, 3, 5)] < macs[(2, 4, 6)]
        conventions = {r.matching_convention for r in reports.values()}
        details = ", ".join(f"{d}: {m / 1e9:.2f} GMACs" for d, m in macs.items())
        return ok, f"{details}; nearest convention {sorted(conventions)}", {"gmacs": {str(d): m / 1e9 for d, m in macs.items()}}

    def channel_order():
        params, macs = [], []
        for channels in (128, 256, 512):
            model = build_network(NetworkConfig(decoder_ch=channels))
            params.append(count_params(model))
            macs.append(flop_report(model).macs)
        ok = params[0] < params[1] < params[2] and macs[0] < macs[1] < macs[2]
        details = ", ".join(f"{c}: {p / 1e6:.2f}M {m / 1e9:.2f} GMACs" for c, p, m in zip((128, 256, 512), params, macs))
        return ok, details, {}

    checks = [
        _check("figures", "stdc_channel_rule", channel_rule),
        _check("figures", "total_params", total_params),
        _check("figures", "dilation_param_deltas", dilation_deltas),
        _check("figures", "se_aspp_closed_form", closed_form),
        _check("figures", "stdc2_larger_than_stdc1", variants),
    ]
    if flops:
        checks.append(_check("figures", "flop_ordering", flop_order))
        checks.append(_check("figures", "channel_width_ordering", channel_order))
    return checks


def ablation_output_gap(
    changes: Dict[str, object],
    cfg: Optional[NetworkConfig] = None,
    seed: int = 0,
    shape: Tuple[int, int, int, int] = (1, 3, 64, 64),
) -> float:
    """Largest logit change from an ablation, with every weight the two networks share copied across."""
    cfg = cfg or NetworkConfig(base_ch=16, decoder_ch=32, num_classes=4)
    full = build_network(cfg, seed=seed)
    ablated = build_network(cfg.replace(**changes), seed=seed)
    source = dict(full.named_parameters())
    for name, param in ablated.named_parameters():
        if name in source and source[name].shape == param.shape:
            param.data[...] = source[name].data
    image = Tensor(np.random.default_rng(seed).random(shape).astype(np.float32))
    full.set_mode(Mode.INFER)
    ablated.set_mode(Mode.INFER)
    return float(np.abs(full(image).logits.data - ablated(image).logits.data).max())


def invariants_suite(seed: int = 0) -> List[Check]:
    rng = np.random.default_rng(seed)

    def focal_gamma_zero():
        for _ in range(10):
            logits = Tensor(rng.standard_normal((2, 5, 3, 3)) * 3, dtype="float64")
            target = rng.integers(0, 5, size=(2, 3, 3))
            if abs(focal_loss(logits, target, 0.0).item() - cross_entropy(logits, target).item()) > 1e-12:
                return False, "focal(gamma=0) differs from cross-entropy", {}
        return True, "identical on 10 random cases", {}

    def poly_schedule():
        cfg = OptimConfig(max_iter=1000)
        values = [poly_lr(i, cfg) for i in range(0, 1001, 10)]
        ok = all(a >= b for a, b in zip(values, values[1:])) and cfg.min_lr <= min(values) and max(values) <= cfg.base_lr
        ok &= abs(poly_lr(500, cfg) - 0.01 * 0.5 ** 0.9) < 1e-9 and poly_lr(1000, cfg) == cfg.min_lr and poly_lr(0, cfg) == cfg.base_lr
        return ok, "non-increasing and bounded", {}

    def sgd_quadratic():
        x = Tensor(np.array([1.0]), dtype="float64")
        cfg = OptimConfig(base_lr=0.01, weight_decay=0.0)
        velocities: Dict[str, np.ndarray] = {}
        for step in range(500):
            sgd_step([("x", x)], [2.0 * x.data], velocities, cfg.base_lr, cfg)
        return abs(x.data[0]) < 1e-6, f"x after 500 steps = {x.data[0]:.3e}", {}

    def miou_examples():
        cm = ConfusionMatrix(2)
        cm.counts[...] = [[3, 1], [1, 3]]
        pred = rng.integers(0, 4, size=(8, 8))
        target = rng.integers(0, 4, size=(8, 8))
        perm = rng.permutation(4)
        a = ConfusionMatrix(4).accumulate(pred, target).miou()
        b = ConfusionMatrix(4).accumulate(perm[pred], perm[target]).miou()
        return abs(cm.miou() - 0.6) < 1e-12 and abs(a - b) < 1e-12, f"[[3,1],[1,3]] -> {cm.miou():.3f}", {}

    def ccbam_symmetry():
        block = Ccbam(16, rng=rng, dtype=Precision.DOUBLE)
        x = Tensor(rng.standard_normal((1, 16, 3, 3)), dtype="float64")
        for low, high in ((block.ca_low, block.ca_high), (block.sa_low, block.sa_high)):
            for (_, mine), (_, other) in zip(low.named_parameters(), high.named_parameters()):
                mine.data[...] = other.data
        out = block(x, x).data
        f_high = x.data * block.ca_high(x).data
        s = block.sa_high(Tensor(f_high, dtype="float64")).data
        ok, err = _close(out, 2 * f_high * s, rtol=1e-12)
        return ok, f"high == low gives 2*F*S (rel err {err:.1e})", {}

    def ccbam_zero_weights():
        block = Ccbam(16, rng=rng, dtype=Precision.DOUBLE)
        for param in block.parameters():
            param.data[...] = 0.0
        high = Tensor(rng.standard_normal((2, 16, 3, 3)), dtype="float64")
        low = Tensor(rng.standard_normal((2, 16, 3, 3)), dtype="float64")
        ok, err = _close(block(high, low).data, 0.25 * (high.data + low.data), rtol=1e-12)
        return ok, f"zero weights give (high + low) / 4 (rel err {err:.1e})", {}

    def ccbam_joint_swap():
        block = Ccbam(16, rng=rng, dtype=Precision.DOUBLE)
        swapped = Ccbam(16, rng=rng, dtype=Precision.DOUBLE)
        pairs = ((swapped.ca_high, block.ca_low), (swapped.ca_low, block.ca_high),
                 (swapped.sa_high, block.sa_low), (swapped.sa_low, block.sa_high))
        for target, source in pairs:
            for (_, mine), (_, other) in zip(target.named_parameters(), source.named_parameters()):
                mine.data[...] = other.data
        high = Tensor(rng.standard_normal((1, 16, 4, 3)), dtype="float64")
        low = Tensor(rng.standard_normal((1, 16, 4, 3)), dtype="float64")
        ok, err = _close(block(high, low).data, swapped(low, high).data, rtol=1e-12)
        return ok, f"swapping inputs with their attention stacks is a no-op (rel err {err:.1e})", {}

    def composite_endpoints():
        logits = Tensor(rng.standard_normal((1, 4, 3, 3)), dtype="float64")
        target = rng.integers(0, 4, size=(1, 3, 3))
        ce = cross_entropy(logits, target).item()
        fl = focal_loss(logits, target, 2.0).item()
        at_one = composite_loss(logits, target, LossConfig(alpha=1.0)).item()
        at_zero = composite_loss(logits, target, LossConfig(alpha=0.0)).item()
        ok = abs(at_one - ce) < 1e-12 and abs(at_zero - fl) < 1e-12
        return ok, f"alpha=1 -> CE {at_one:.6f}, alpha=0 -> focal {at_zero:.6f}", {}

    def determinism():
        cfg = NetworkConfig(base_ch=16, decoder_ch=32, num_classes=4)
        a, b = build_network(cfg, seed=3), build_network(cfg, seed=3)
        same = all(np.array_equal(p.data, q.data) for p, q in zip(a.parameters(), b.parameters()))
        image = Tensor(rng.random((1, 3, 64, 64)).astype(np.float32))
        a.set_mode(Mode.INFER)
        first, second = a(image).logits.data, a(image).logits.data
        return same and np.array_equal(first, second), "same seed -> same weights; repeated inference bit-identical", {}

    def ablations_are_wired():
        gaps = {key: ablation_output_gap({key: False}, seed=seed) for key in ("use_ccbam", "use_se_aspp")}
        details = ", ".join(f"{key}=False changes logits by {gap:.2e}" for key, gap in gaps.items())
        return all(gap > 1e-6 for gap in gaps.values()), details, {}

    return [
        _check("invariants", "focal_gamma_zero_is_cross_entropy", focal_gamma_zero),
        _check("invariants", "poly_lr_schedule", poly_schedule),
        _check("invariants", "sgd_quadratic_convergence", sgd_quadratic),
        _check("invariants", "miou_examples_and_permutation", miou_examples),
        _check("invariants", "ccbam_self_fusion_symmetry", ccbam_symmetry),
        _check("invariants", "ccbam_zero_weight_reduction", ccbam_zero_weights),
        _check("invariants", "ccbam_joint_swap_symmetry", ccbam_joint_swap),
        _check("invariants", "composite_loss_alpha_endpoints", composite_endpoints),
        _check("invariants", "build_and_inference_determinism", determinism),
        _check("invariants", "ablation_switches_change_outputs", ablations_are_wired),
    ]


def data_suite(seed: int = 0) -> List[Check]:
    def synthetic_determinism():
        spec = SyntheticSceneSpec(seed=1, n_samples=4, num_classes=3, canvas=(64, 64))
        a, b = gen_synthetic(spec), gen_synthetic(spec)
        same = all(x.image.tobytes() == y.image.tobytes() and x.mask.tobytes() == y.mask.tobytes() for x, y in zip(a, b))
        return same, "identical bytes from identical spec", {}

    def augmentation_values():
        rng = np.random.default_rng(seed)
        sample = gen_synthetic(SyntheticSceneSpec(seed=seed, n_samples=1, num_classes=4, canvas=(48, 64)))[0]
        allowed = set(np.unique(sample.mask).tolist()) | {255}
        cfg = AugmentConfig(crop=(40, 56), scale_range=(0.5, 1.5))
        for _ in range(100):
            if not set(np.unique(augment(sample, cfg, rng).mask).tolist()) <= allowed:
                return False, "augmentation introduced a new label", {}
        twice = hflip(hflip(sample))
        return np.array_equal(twice.mask, sample.mask), "100 augmentations keep the label set", {}

    def checkpoint_parity():
        cfg = NetworkConfig(base_ch=16, decoder_ch=32, num_classes=4)
        model = build_network(cfg, seed=5)
        other = build_network(cfg, seed=6)
        image = Tensor(np.random.default_rng(seed).random((1, 3, 64, 64)).astype(np.float32))
        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(model, Path(tmp) / "model.xcbm")
            load_checkpoint(other, path)
        model.set_mode(Mode.INFER)
        other.set_mode(Mode.INFER)
        same = np.array_equal(model(image).logits.data, other(image).logits.data)
        return same, "save -> load -> identical logits", {}

    return [
        _check("data", "synthetic_determinism", synthetic_determinism),
        _check("data", "augmentation_label_set", augmentation_values),
        _check("data", "checkpoint_forward_parity", checkpoint_parity),
    ]


def network_gradcheck_suite(full_width: bool = False, n_params: int = 200) -> List[Check]:
    """End-to-end checks; the full-width case samples fewer coordinates unless ``full_width`` is set."""
    small = NetworkConfig(base_ch=16, decoder_ch=32, num_classes=5)

    def case(cfg: NetworkConfig, shape: Tuple[int, ...], n: int, mode: Mode):
        def fn():
            result = gradcheck_network(cfg, input_shape=shape, n_params=n, mode=mode)
            details = f"{result.checked} coordinates, worst rel err {result.max_rel_error:.2e}"
            if result.failures:
                details += f"; {len(result.failures)} failures, first {result.failures[0]}"
            return result.passed, details, result.to_dict()

        return fn

    return [
        _check("gradcheck", "end_to_end_network", case(small, (1, 3, 64, 128), n_params, Mode.INFER)),
        _check("gradcheck", "end_to_end_train_loss", case(small, (2, 3, 64, 128), n_params, Mode.TRAIN)),
        _check(
            "gradcheck",
            "end_to_end_full_width",
            case(NetworkConfig(), (2, 3, 64, 128), n_params if full_width else 24, Mode.TRAIN),
        ),
    ]


SUITES: Dict[str, Callable[..., List[Check]]] = {
    "gradcheck": gradcheck_suite,
    "oracles": oracle_suite,
    "figures": figures_suite,
    "invariants": invariants_suite,
    "data": data_suite,
    "network": network_gradcheck_suite,
}


def run_checks(checks: Sequence[Check], logger: Optional[logging.Logger] = None) -> VerificationReport:
    logger = logger or logging.getLogger(__name__)
    report = VerificationReport()
    for check in checks:
        result = report.add(check())
        status = "PASS" if result.passed else "FAIL"
        log = logger.info if result.passed else logger.error
        log(f"[{status}] {result.suite}/{result.name}: {result.details}")
    summary = report.summary()
    logger.info(f"Verification finished: {summary['passed']}/{summary['total']} checks passed")
    return report


def run_suites(
    names: Optional[Sequence[str]] = None,
    *,
    seeds: int = 20,
    full_width: bool = False,
    logger: Optional[logging.Logger] = None,
) -> VerificationReport:
    checks: List[Check] = []
    for name in names or SUITES:
        if name == "gradcheck":
            checks += gradcheck_suite(seeds)
        elif name == "network":
            checks += network_gradcheck_suite(full_width)
        else:
            checks += SUITES[name]()
    return run_checks(checks, logger)


__all__ = [
    "OP_CASES",
    "SUITES",
    "ablation_output_gap",
    "data_suite",
    "figures_suite",
    "gradcheck_network",
    "gradcheck_op",
    "gradcheck_suite",
    "invariants_suite",
    "network_gradcheck_suite",
    "oracle_suite",
    "run_checks",
    "run_suites",
]

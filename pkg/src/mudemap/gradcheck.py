"""Central-finite-difference verification of every differentiable op and of
the full (tiny) demapper models, at binary64."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .neuraldemap import CvTConfig, build_model

EPS = 1e-5
RTOL = 1e-4


@dataclass
class GradCheckResult:
    name: str
    max_rel_err: float
    ok: bool


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
    return float(np.max(np.abs(a - b) / denom))


def central_diff(loss_fn, arr: np.ndarray, eps: float = EPS) -> np.ndarray:
    """d loss / d arr by central differences, perturbing arr in place."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = loss_fn()
        flat[i] = orig - eps
        lo = loss_fn()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def check_case(name: str, arrays: dict[str, np.ndarray], build) -> GradCheckResult:
    """Compare reverse-mode grads of build(arrays) against central differences.

    build maps the arrays dict to a scalar loss Tensor, creating fresh leaf
    tensors each call; autodiff grads are read off those leaves.
    """
    leaves = {k: T.Tensor(v) for k, v in arrays.items()}
    loss = build({k: t for k, t in leaves.items()})
    loss.backward()
    def loss_fn():
        with T.no_grad():
            fresh = {k: T.Tensor(v) for k, v in arrays.items()}
            return float(build(fresh).data)

    worst = 0.0
    for key, t in leaves.items():
        fd = central_diff(loss_fn, arrays[key])
        ad = t.grad if t.grad is not None else np.zeros_like(arrays[key])
        worst = max(worst, _rel_err(ad, fd))
    return GradCheckResult(name, worst, worst < RTOL)


def _proj(rng, shape):
    return rng.standard_normal(shape)


def op_suite(seed: int = 0) -> list[GradCheckResult]:
    """Randomized finite-difference checks for each differentiable op."""
    rng = np.random.default_rng(seed)
    results = []

    def case(name, arrays, build):
        results.append(check_case(name, arrays, build))

    p1 = _proj(rng, (3, 4))
    case(
        "add_broadcast",
        {"a": rng.standard_normal((3, 4)), "b": rng.standard_normal((4,))},
        lambda t: T.tsum(T.mul(T.add(t["a"], t["b"]), T.Tensor(p1))),
    )
    p_mul = _proj(rng, (2, 5))
    case(
        "mul",
        {"a": rng.standard_normal((2, 5)), "b": rng.standard_normal((2, 5))},
        lambda t: T.tsum(T.mul(T.mul(t["a"], t["b"]), T.Tensor(p_mul))),
    )
    p2 = _proj(rng, (2, 3, 5))
    case(
        "matmul_batched",
        {"a": rng.standard_normal((2, 3, 4)), "b": rng.standard_normal((4, 5))},
        lambda t: T.tsum(T.mul(T.matmul(t["a"], t["b"]), T.Tensor(p2))),
    )
    p3 = _proj(rng, (4, 6))
    case(
        "reshape_transpose",
        {"a": rng.standard_normal((2, 3, 4))},
        lambda t: T.tsum(T.mul(T.reshape(T.transpose(t["a"], (2, 0, 1)), (4, 6)), T.Tensor(p3))),
    )
    p4 = _proj(rng, (3, 7))
    case(
        "relu",
        {"a": rng.standard_normal((3, 7)) + 0.05},
        lambda t: T.tsum(T.mul(T.relu(t["a"]), T.Tensor(p4))),
    )
    p5 = _proj(rng, (4, 5))
    case(
        "softmax",
        {"a": rng.standard_normal((4, 5))},
        lambda t: T.tsum(T.mul(T.softmax(t["a"], axis=-1), T.Tensor(p5))),
    )
    p6 = _proj(rng, (2, 4, 4, 3))
    case(
        "conv2d",
        {
            "x": rng.standard_normal((2, 4, 4, 3)),
            "w": rng.standard_normal((3, 3, 3, 3)) * 0.5,
            "b": rng.standard_normal(3),
        },
        lambda t: T.tsum(T.mul(T.conv2d(t["x"], t["w"], t["b"]), T.Tensor(p6))),
    )
    p7 = _proj(rng, (1, 5, 5, 2))
    case(
        "conv2d_dilated",
        {
            "x": rng.standard_normal((1, 5, 5, 2)),
            "w": rng.standard_normal((3, 3, 2, 2)) * 0.5,
            "b": rng.standard_normal(2),
        },
        lambda t: T.tsum(T.mul(T.conv2d(t["x"], t["w"], t["b"], dilation=2), T.Tensor(p7))),
    )
    p8 = _proj(rng, (2, 4, 4, 3))
    case(
        "depthwise_conv2d",
        {"x": rng.standard_normal((2, 4, 4, 3)), "w": rng.standard_normal((3, 3, 3)) * 0.5},
        lambda t: T.tsum(T.mul(T.depthwise_conv2d(t["x"], t["w"]), T.Tensor(p8))),
    )
    p9 = _proj(rng, (2, 4, 4, 4))
    case(
        "separable_conv2d",
        {
            "x": rng.standard_normal((2, 4, 4, 3)),
            "wd": rng.standard_normal((3, 3, 3)) * 0.5,
            "wp": rng.standard_normal((1, 1, 3, 4)) * 0.5,
            "b": rng.standard_normal(4),
        },
        lambda t: T.tsum(T.mul(T.separable_conv2d(t["x"], t["wd"], t["wp"], t["b"]), T.Tensor(p9))),
    )
    p10 = _proj(rng, (6, 3, 4))
    rm, rv = np.zeros(4), np.ones(4)
    case(
        "batchnorm_train",
        {
            "x": rng.standard_normal((6, 3, 4)),
            "g": rng.standard_normal(4) * 0.5 + 1.0,
            "bt": rng.standard_normal(4),
        },
        lambda t: T.tsum(
            T.mul(T.batchnorm(t["x"], t["g"], t["bt"], rm.copy(), rv.copy(), train=True), T.Tensor(p10))
        ),
    )
    p11 = _proj(rng, (3, 2, 5))
    case(
        "dense",
        {
            "x": rng.standard_normal((3, 2, 4)),
            "w": rng.standard_normal((4, 5)),
            "b": rng.standard_normal(5),
        },
        lambda t: T.tsum(T.mul(T.dense(t["x"], t["w"], t["b"]), T.Tensor(p11))),
    )
    p12 = _proj(rng, (2, 3, 7))
    case(
        "concat",
        {"a": rng.standard_normal((2, 3, 3)), "b": rng.standard_normal((2, 3, 4))},
        lambda t: T.tsum(T.mul(T.concat((t["a"], t["b"]), axis=-1), T.Tensor(p12))),
    )
    bce_bits = rng.integers(0, 2, size=(2, 3, 4)).astype(np.uint8)
    bce_mask = rng.integers(0, 2, size=(2, 3, 4)).astype(bool)
    bce_mask[0, 0, 0] = True
    case(
        "bce_from_llr",
        {"llr": rng.standard_normal((2, 3, 4)) * 3.0},
        lambda t: T.bce_from_llr(t["llr"], bce_bits, bce_mask),
    )
    return results


def model_check(kind: str = "cvt", seed: int = 0) -> GradCheckResult:
    """Full-model gradient check on tiny dims at binary64.

    Every trainable parameter entry is perturbed; batchnorm runs in train
    mode on a fixed batch.
    """
    rng = np.random.default_rng(seed)
    cfg = CvTConfig(
        d_model=8, d_key=4, n_heads=2,
        n_blocks=3 if kind == "cvt" else 5,
        bits_per_symbol=2,
    )
    model = build_model(kind, cfg, seed=seed, dtype=np.float64)
    b, n_u, nf, nt = 1, 2, 4, 4
    xhat = rng.standard_normal((b, n_u, nf, nt, 2))
    r_x = rng.uniform(0.1, 1.0, size=(b, n_u, nf, nt, 1))
    bits = rng.integers(0, 2, size=(b, n_u, nf, nt, cfg.bits_per_symbol)).astype(np.uint8)
    mask = np.ones((1, 1, nf, nt, 1), dtype=bool)

    def loss_tensor():
        llr = model.forward(xhat, r_x, train=True)
        return T.bce_from_llr(T.transpose(llr, (0, 3, 1, 2, 4)), bits, mask)

    loss = loss_tensor()
    model.params.zero_grad()
    loss.backward()
    grads = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
             for name, t in model.params.tensors(trainable_only=True)}

    def loss_fn():
        with T.no_grad():
            return float(loss_tensor().data)

    worst = 0.0
    for name, t in model.params.tensors(trainable_only=True):
        fd = central_diff(loss_fn, t.data)
        worst = max(worst, _rel_err(grads[name], fd))
    return GradCheckResult(f"model_{kind}", worst, worst < RTOL)


def full_suite(seed: int = 0, include_models: bool = True) -> list[GradCheckResult]:
    results = op_suite(seed)
    if include_models:
        results.append(model_check("cvt", seed))
        results.append(model_check("resnet", seed))
    return results

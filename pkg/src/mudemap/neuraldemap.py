"""Convolutional-attention demapper and its ResNet counterpart.

Both networks map the pair (equalized symbol grid as re/im planes, per-RE
error variances) to one LLR per transmitted bit. Users are folded into the
batch axis for all convolutions; the CvT blocks additionally run multi-head
attention across the user axis at each RE, which is the only place users mix.
Output LLRs follow the receiver-wide convention: positive favors bit 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigurationError
from .tensor import ParamStore, Tensor


@dataclass(frozen=True)
class CvTConfig:
    """Width/depth of the demapper networks.

    d_model must equal n_heads * d_key so attention heads tile the model
    width. n_blocks counts CvT blocks (or ResNet blocks for the ResNet
    variant, conventionally 5).
    """

    d_model: int = 64
    d_key: int = 8
    n_heads: int = 8
    n_blocks: int = 3
    bits_per_symbol: int = 2

    def __post_init__(self):
        if self.d_model != self.n_heads * self.d_key:
            raise ConfigurationError(
                f"d_model must be n_heads*d_key: {self.d_model} != {self.n_heads}*{self.d_key}"
            )
        if min(self.d_model, self.d_key, self.n_heads, self.n_blocks, self.bits_per_symbol) < 1:
            raise ConfigurationError("all model dimensions must be >= 1")


def _glorot(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv2D:
    def __init__(self, store: ParamStore, name: str, k: int, cin: int, cout: int, rng, dtype):
        self.w = store.add(f"{name}.w", _glorot(rng, (k, k, cin, cout), k * k * cin, k * k * cout, dtype))
        self.b = store.add(f"{name}.b", np.zeros(cout, dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.w, self.b)


class SeparableConv2D:
    def __init__(self, store: ParamStore, name: str, k: int, cin: int, cout: int, rng, dtype):
        self.w_depth = store.add(f"{name}.depthwise", _glorot(rng, (k, k, cin), k * k, k * k, dtype))
        self.w_point = store.add(f"{name}.pointwise", _glorot(rng, (1, 1, cin, cout), cin, cout, dtype))
        self.b = store.add(f"{name}.b", np.zeros(cout, dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return T.separable_conv2d(x, self.w_depth, self.w_point, self.b)


class BatchNorm:
    def __init__(self, store: ParamStore, name: str, c: int, dtype):
        self.gamma = store.add(f"{name}.gamma", np.ones(c, dtype))
        self.beta = store.add(f"{name}.beta", np.zeros(c, dtype))
        self.running_mean = store.add(f"{name}.running_mean", np.zeros(c, dtype), trainable=False)
        self.running_var = store.add(f"{name}.running_var", np.ones(c, dtype), trainable=False)

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        return T.batchnorm(
            x, self.gamma, self.beta, self.running_mean.data, self.running_var.data, train
        )


class Dense:
    def __init__(self, store: ParamStore, name: str, cin: int, cout: int, rng, dtype):
        self.w = store.add(f"{name}.w", _glorot(rng, (cin, cout), cin, cout, dtype))
        self.b = store.add(f"{name}.b", np.zeros(cout, dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return T.dense(x, self.w, self.b)


class MultiHeadAttention:
    """Scaled dot-product attention over the user axis, heads tiling d_model."""

    def __init__(self, store: ParamStore, name: str, cfg: CvTConfig, rng, dtype):
        dm = cfg.d_model
        self.cfg = cfg
        self.proj_q = Dense(store, f"{name}.q", dm, dm, rng, dtype)
        self.proj_k = Dense(store, f"{name}.k", dm, dm, rng, dtype)
        self.proj_v = Dense(store, f"{name}.v", dm, dm, rng, dtype)
        self.proj_out = Dense(store, f"{name}.out", dm, dm, rng, dtype)

    def _split_heads(self, x: Tensor) -> Tensor:
        s, n_u, dm = x.shape
        x = T.reshape(x, (s, n_u, self.cfg.n_heads, self.cfg.d_key))
        return T.transpose(x, (0, 2, 1, 3))  # (S, heads, users, d_key)

    def __call__(self, q: Tensor, k: Tensor, v: Tensor) -> Tensor:
        s, n_u, dm = q.shape
        if dm != self.cfg.d_model:
            raise ConfigurationError(f"attention width mismatch: {dm} != {self.cfg.d_model}")
        qh = self._split_heads(self.proj_q(q))
        kh = self._split_heads(self.proj_k(k))
        vh = self._split_heads(self.proj_v(v))
        scores = T.matmul(qh, T.transpose(kh, (0, 1, 3, 2))) * (1.0 / np.sqrt(self.cfg.d_key))
        attn = T.softmax(scores, axis=-1)
        a = T.matmul(attn, vh)  # (S, heads, users, d_key)
        a = T.transpose(a, (0, 2, 1, 3))
        a = T.reshape(a, (s, n_u, dm))
        return self.proj_out(a)


class CvTBlock:
    """Conv projections -> user-axis attention -> residual conv feed-forward."""

    def __init__(self, store: ParamStore, name: str, cfg: CvTConfig, rng, dtype):
        dm = cfg.d_model
        self.conv_q = SeparableConv2D(store, f"{name}.conv_q", 3, dm, dm, rng, dtype)
        self.bn_q = BatchNorm(store, f"{name}.bn_q", dm, dtype)
        self.conv_k = SeparableConv2D(store, f"{name}.conv_k", 3, dm, dm, rng, dtype)
        self.bn_k = BatchNorm(store, f"{name}.bn_k", dm, dtype)
        self.conv_v = SeparableConv2D(store, f"{name}.conv_v", 3, dm, dm, rng, dtype)
        self.bn_v = BatchNorm(store, f"{name}.bn_v", dm, dtype)
        self.mha = MultiHeadAttention(store, f"{name}.mha", cfg, rng, dtype)
        self.bn_mid = BatchNorm(store, f"{name}.bn_mid", dm, dtype)
        self.conv_f1 = SeparableConv2D(store, f"{name}.conv_f1", 3, dm, dm, rng, dtype)
        self.conv_f2 = SeparableConv2D(store, f"{name}.conv_f2", 3, dm, dm, rng, dtype)

    def __call__(self, z: Tensor, n_u: int, train: bool, record=None) -> Tensor:
        bnu, nf, nt, dm = z.shape
        b = bnu // n_u

        def to_tokens(t):
            # (B*N_u, N_f, N_t, d) -> (B*N_f*N_t, N_u, d): users become tokens
            t = T.reshape(t, (b, n_u, nf, nt, dm))
            t = T.transpose(t, (0, 2, 3, 1, 4))
            return T.reshape(t, (b * nf * nt, n_u, dm))

        def from_tokens(t):
            t = T.reshape(t, (b, nf, nt, n_u, dm))
            t = T.transpose(t, (0, 3, 1, 2, 4))
            return T.reshape(t, (b * n_u, nf, nt, dm))

        q = to_tokens(self.bn_q(self.conv_q(z), train))
        k = to_tokens(self.bn_k(self.conv_k(z), train))
        v = to_tokens(self.bn_v(self.conv_v(z), train))
        if record is not None:
            record.append(("cvt.tokens_q", q.shape))
        a = self.mha(q, k, v)
        if record is not None:
            record.append(("cvt.mha_out", a.shape))
        z = z + from_tokens(a)
        w = self.bn_mid(z, train)
        w = self.conv_f1(T.relu(w))
        w = self.conv_f2(T.relu(w))
        return z + w


class ResNetBlock:
    def __init__(self, store: ParamStore, name: str, dm: int, rng, dtype):
        self.bn1 = BatchNorm(store, f"{name}.bn1", dm, dtype)
        self.conv1 = Conv2D(store, f"{name}.conv1", 3, dm, dm, rng, dtype)
        self.bn2 = BatchNorm(store, f"{name}.bn2", dm, dtype)
        self.conv2 = Conv2D(store, f"{name}.conv2", 3, dm, dm, rng, dtype)

    def __call__(self, z: Tensor, train: bool) -> Tensor:
        w = self.conv1(T.relu(self.bn1(z, train)))
        w = self.conv2(T.relu(self.bn2(w, train)))
        return z + w


class _DemapperBase:
    """Shared outer stack: concat inputs, fold users into batch, conv head."""

    kind = ""

    def __init__(self, cfg: CvTConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.params = ParamStore()
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed])))
        self.conv_in = Conv2D(self.params, "conv_in", 3, 3, cfg.d_model, rng, self.dtype)
        self._build_blocks(rng)
        self.conv_out = Conv2D(self.params, "conv_out", 1, cfg.d_model, cfg.bits_per_symbol, rng, self.dtype)

    def _build_blocks(self, rng):
        raise NotImplementedError

    def _run_blocks(self, z: Tensor, n_u: int, train: bool, record) -> Tensor:
        raise NotImplementedError

    def forward(self, xhat_ri: np.ndarray, r_x: np.ndarray, train: bool = False, record=None) -> Tensor:
        """Demap a batch; returns LLRs of shape (B, N_f, N_t, N_u, K).

        xhat_ri: (B, N_u, N_f, N_t, 2) re/im of equalized symbols.
        r_x: (B, N_u, N_f, N_t, 1) post-equalization error variances.
        """
        if xhat_ri.ndim != 5 or xhat_ri.shape[-1] != 2:
            raise ConfigurationError(f"bad equalized-symbol shape {xhat_ri.shape}")
        if r_x.shape != xhat_ri.shape[:-1] + (1,):
            raise ConfigurationError(f"bad variance shape {r_x.shape} for input {xhat_ri.shape}")
        b, n_u, nf, nt, _ = xhat_ri.shape
        k = self.cfg.bits_per_symbol

        def rec(name, t):
            if record is not None:
                record.append((name, t.shape))
            return t

        x_in = Tensor(np.ascontiguousarray(xhat_ri, dtype=self.dtype))
        r_in = Tensor(np.ascontiguousarray(r_x, dtype=self.dtype))
        rec("input_xhat", x_in)
        rec("input_rx", r_in)
        z = rec("concat", T.concat((x_in, r_in), axis=-1))
        z = rec("fold_users", T.reshape(z, (b * n_u, nf, nt, 3)))
        z = rec("conv_in", self.conv_in(z))
        z = self._run_blocks(z, n_u, train, record)
        rec("blocks", z)
        z = rec("conv_out", self.conv_out(z))
        z = T.reshape(z, (b, n_u, nf, nt, k))
        out = rec("output_llr", T.transpose(z, (0, 2, 3, 1, 4)))
        return out

    def num_params(self) -> int:
        return self.params.num_params(trainable_only=True)

    def save(self, path: str) -> None:
        T.save_checkpoint(self.params, path)

    def load(self, path: str) -> None:
        arrays = T.load_checkpoint_arrays(path)
        self.params.load_state({k: v for k, v in arrays.items()})


class CvTDemapper(_DemapperBase):
    kind = "cvt"

    def _build_blocks(self, rng):
        self.blocks = [
            CvTBlock(self.params, f"block{i}", self.cfg, rng, self.dtype)
            for i in range(self.cfg.n_blocks)
        ]

    def _run_blocks(self, z, n_u, train, record):
        for i, blk in enumerate(self.blocks):
            z = blk(z, n_u, train, record=record if i == 0 else None)
        return z


class ResNetDemapper(_DemapperBase):
    kind = "resnet"

    def _build_blocks(self, rng):
        self.blocks = [
            ResNetBlock(self.params, f"block{i}", self.cfg.d_model, rng, self.dtype)
            for i in range(self.cfg.n_blocks)
        ]

    def _run_blocks(self, z, n_u, train, record):
        for blk in self.blocks:
            z = blk(z, train)
        return z


def build_model(kind: str, cfg: CvTConfig, seed: int = 0, dtype=np.float32):
    if kind == "cvt":
        return CvTDemapper(cfg, seed, dtype)
    if kind == "resnet":
        return ResNetDemapper(cfg, seed, dtype)
    raise ConfigurationError(f"unknown model kind {kind!r}")


def llr_user_first(llr: np.ndarray) -> np.ndarray:
    """(B, N_f, N_t, N_u, K) network layout -> (B, N_u, N_f, N_t, K)."""
    return np.ascontiguousarray(np.transpose(llr, (0, 3, 1, 2, 4)))


def model_card(model: _DemapperBase) -> str:
    cfg = model.cfg
    lines = [
        f"kind: {model.kind}",
        f"d_model: {cfg.d_model}",
        f"d_key: {cfg.d_key}",
        f"n_heads: {cfg.n_heads}",
        f"n_blocks: {cfg.n_blocks}",
        f"bits_per_symbol: {cfg.bits_per_symbol}",
        f"dtype: {model.dtype.name}",
        f"trainable_parameters: {model.num_params()}",
    ]
    return "\n".join(lines) + "\n"

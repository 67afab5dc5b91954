"""Forward math and operation counters for FBfly/ABfly blocks and full FABNet.

Every linear map in the network is a square butterfly matrix at the padded
(power-of-two) width.  The FFN expansion D -> R*D runs R independent square
butterflies whose outputs are concatenated; the contraction runs R square
butterflies whose outputs are summed.  Non-power-of-two widths are
zero-padded up front and truncated on output; the counters charge the
padded sizes.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass

import numpy as np

from .butterfly import (
    ButterflyMatrix,
    apply_butterfly,
    butterfly_from_json,
    butterfly_to_json,
    fft_array,
    log2_int,
    next_pow2,
    random_butterfly,
)
from .errors import ConfigError, ShapeError

__all__ = [
    "FabNetConfig",
    "BlockWeights",
    "CountReport",
    "softmax_row",
    "layernorm_row",
    "fbfly_forward",
    "abfly_forward",
    "fabnet_forward",
    "count_flops_params",
    "dense_stage_flops",
    "random_fabnet_weights",
    "load_model_config",
    "save_activations",
    "load_activations",
]

FAMILIES = ("fabnet", "transformer", "fnet")
_FAMILY_ALIASES = {
    "fabnet": "fabnet",
    "transformer": "transformer",
    "transformerencoder": "transformer",
    "fnet": "fnet",
}


def normalize_family(name: str) -> str:
    key = name.replace("-", "").replace("_", "").lower()
    if key not in _FAMILY_ALIASES:
        raise ConfigError(f"unknown model family {name!r}; expected one of FABNet, TransformerEncoder, FNet")
    return _FAMILY_ALIASES[key]


@dataclass(frozen=True)
class FabNetConfig:
    d_hid: int
    r_ffn: int
    n_total: int
    n_abfly: int
    n_heads: int
    seq_len: int
    pad_policy: str = "pad"

    def __post_init__(self):
        if self.d_hid < 1 or self.r_ffn < 1 or self.seq_len < 1:
            raise ConfigError("d_hid, r_ffn and seq_len must be positive")
        if not (0 <= self.n_abfly <= self.n_total):
            raise ConfigError(f"need 0 <= n_abfly <= n_total, got {self.n_abfly}/{self.n_total}")
        if self.n_heads < 1 or self.d_hid % self.n_heads != 0:
            raise ConfigError(f"n_heads={self.n_heads} must divide d_hid={self.d_hid}")
        if self.pad_policy not in ("pad", "none"):
            raise ConfigError(f"pad_policy must be 'pad' or 'none', got {self.pad_policy!r}")
        if self.pad_policy == "none":
            for dim, label in ((self.d_hid, "d_hid"), (self.seq_len, "seq_len")):
                if dim & (dim - 1):
                    raise ConfigError(f"{label}={dim} is not a power of two and padding is disabled")

    @property
    def n_fbfly(self) -> int:
        return self.n_total - self.n_abfly

    @property
    def d_head(self) -> int:
        return self.d_hid // self.n_heads

    @property
    def d_pad(self) -> int:
        return next_pow2(self.d_hid)

    @property
    def seq_pad(self) -> int:
        return next_pow2(self.seq_len)


@dataclass
class BlockWeights:
    """Per-block parameters; every linear map is a ButterflyMatrix at d_pad."""

    kind: str  # "fbfly" or "abfly"
    ffn1: tuple[ButterflyMatrix, ...]
    ffn2: tuple[ButterflyMatrix, ...]
    ln1_gamma: np.ndarray
    ln1_beta: np.ndarray
    ln2_gamma: np.ndarray
    ln2_beta: np.ndarray
    q: ButterflyMatrix | None = None
    k: ButterflyMatrix | None = None
    v: ButterflyMatrix | None = None
    o: ButterflyMatrix | None = None

    def __post_init__(self):
        if self.kind not in ("fbfly", "abfly"):
            raise ConfigError(f"unknown block kind {self.kind!r}")
        if self.kind == "abfly" and None in (self.q, self.k, self.v, self.o):
            raise ConfigError("abfly blocks need q/k/v/o butterflies")


def softmax_row(x) -> np.ndarray:
    """Max-subtracted softmax along the last axis."""
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def layernorm_row(x, gamma=1.0, beta=0.0, eps: float = 1e-5) -> np.ndarray:
    """Layer normalization along the last axis with learned gamma/beta."""
    x = np.asarray(x, dtype=np.float64)
    mu = np.mean(x, axis=-1, keepdims=True)
    var = np.mean((x - mu) ** 2, axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


def _pad_cols(x: np.ndarray, width: int) -> np.ndarray:
    if x.shape[-1] == width:
        return x
    out = np.zeros(x.shape[:-1] + (width,), dtype=x.dtype)
    out[..., : x.shape[-1]] = x
    return out


def _check_tokens(x, cfg: FabNetConfig) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (cfg.seq_len, cfg.d_hid):
        raise ShapeError(f"expected activations ({cfg.seq_len}, {cfg.d_hid}), got {x.shape}")
    return x


def _butterfly_project(m: ButterflyMatrix, x: np.ndarray, cfg: FabNetConfig, fp16: bool) -> np.ndarray:
    y = apply_butterfly(m, _pad_cols(x, cfg.d_pad), fp16=fp16)
    return y[..., : cfg.d_hid]


def fourier_mix(x: np.ndarray, cfg: FabNetConfig, *, fp16: bool = False) -> np.ndarray:
    """2D Fourier token mixing: FFT over the hidden dim, FFT over the
    sequence dim, real part kept, padded widths truncated on output."""
    xp = _pad_cols(x, cfg.d_pad).astype(np.complex128)
    xp = fft_array(xp, fp16=fp16)  # along hidden dim, one transform per token
    xp = _pad_cols(xp.T, cfg.seq_pad)
    xp = fft_array(xp, fp16=fp16).T  # along sequence dim, one transform per channel
    return xp.real[: cfg.seq_len, : cfg.d_hid]


def butterfly_ffn(x: np.ndarray, w: BlockWeights, cfg: FabNetConfig, *, fp16: bool = False) -> np.ndarray:
    if len(w.ffn1) != cfg.r_ffn or len(w.ffn2) != cfg.r_ffn:
        raise ConfigError(f"FFN needs r_ffn={cfg.r_ffn} butterflies per side")
    xp = _pad_cols(x, cfg.d_pad)
    out = np.zeros((x.shape[0], cfg.d_pad))
    for m1, m2 in zip(w.ffn1, w.ffn2):
        hidden = np.maximum(apply_butterfly(m1, xp, fp16=fp16), 0.0)  # ReLU
        out = out + apply_butterfly(m2, hidden, fp16=fp16)
    return out[..., : cfg.d_hid]


def fbfly_forward(x, w: BlockWeights, cfg: FabNetConfig, *, fp16: bool = False) -> np.ndarray:
    """Fourier mixing + shortcut + LN, then butterfly FFN + shortcut + LN (post-norm)."""
    x = _check_tokens(x, cfg)
    if w.kind != "fbfly":
        raise ConfigError("fbfly_forward requires fbfly weights")
    mixed = fourier_mix(x, cfg, fp16=fp16)
    y1 = layernorm_row(mixed + x, w.ln1_gamma, w.ln1_beta)
    ffn = butterfly_ffn(y1, w, cfg, fp16=fp16)
    return layernorm_row(ffn + y1, w.ln2_gamma, w.ln2_beta)


def _multi_head_attention(q, k, v, n_heads: int) -> np.ndarray:
    seq, d = q.shape
    d_head = d // n_heads
    out = np.empty_like(q)
    for h in range(n_heads):
        sl = slice(h * d_head, (h + 1) * d_head)
        scores = q[:, sl] @ k[:, sl].T / np.sqrt(d_head)
        out[:, sl] = softmax_row(scores) @ v[:, sl]
    return out


def abfly_forward(x, w: BlockWeights, cfg: FabNetConfig, *, fp16: bool = False) -> np.ndarray:
    """Attention with butterfly Q/K/V/output projections, then butterfly FFN."""
    x = _check_tokens(x, cfg)
    if w.kind != "abfly":
        raise ConfigError("abfly_forward requires abfly weights")
    q = _butterfly_project(w.q, x, cfg, fp16)
    k = _butterfly_project(w.k, x, cfg, fp16)
    v = _butterfly_project(w.v, x, cfg, fp16)
    attn = _multi_head_attention(q, k, v, cfg.n_heads)
    proj = _butterfly_project(w.o, attn, cfg, fp16)
    y1 = layernorm_row(proj + x, w.ln1_gamma, w.ln1_beta)
    ffn = butterfly_ffn(y1, w, cfg, fp16=fp16)
    return layernorm_row(ffn + y1, w.ln2_gamma, w.ln2_beta)


def fabnet_forward(cfg: FabNetConfig, weights, x, *, fp16: bool = False) -> np.ndarray:
    """Sequential FBfly blocks followed by ABfly blocks."""
    x = _check_tokens(x, cfg)
    weights = list(weights)
    if len(weights) != cfg.n_total:
        raise ConfigError(f"expected {cfg.n_total} weight blocks, got {len(weights)}")
    for i, w in enumerate(weights):
        expected = "fbfly" if i < cfg.n_fbfly else "abfly"
        if w.kind != expected:
            raise ConfigError(f"block {i} must be {expected}, got {w.kind}")
        x = (fbfly_forward if w.kind == "fbfly" else abfly_forward)(x, w, cfg, fp16=fp16)
    return x


def random_fabnet_weights(cfg: FabNetConfig, rng: np.random.Generator, scale: float | None = None):
    """Random weights for smoke tests; training is out of scope."""
    blocks = []
    for i in range(cfg.n_total):
        kind = "fbfly" if i < cfg.n_fbfly else "abfly"
        mk = lambda: random_butterfly(cfg.d_pad, rng, scale)
        blocks.append(
            BlockWeights(
                kind=kind,
                ffn1=tuple(mk() for _ in range(cfg.r_ffn)),
                ffn2=tuple(mk() for _ in range(cfg.r_ffn)),
                ln1_gamma=np.ones(cfg.d_hid),
                ln1_beta=np.zeros(cfg.d_hid),
                ln2_gamma=np.ones(cfg.d_hid),
                ln2_beta=np.zeros(cfg.d_hid),
                **({"q": mk(), "k": mk(), "v": mk(), "o": mk()} if kind == "abfly" else {}),
            )
        )
    return blocks


# --- operation counters ------------------------------------------------------

@dataclass
class CountReport:
    family: str
    flops: int = 0
    params: int = 0
    attention_flops: int = 0
    fft_flops: int = 0
    linear_flops: int = 0
    butterfly_mults: int = 0  # multiplication term of the butterfly layers only

    def add_butterfly_linear(self, n: int, rows: int, count: int = 1):
        levels = log2_int(n)
        self.params += count * 2 * n * levels
        fl = count * 6 * (n // 2) * levels * rows  # 4 mul + 2 add per pair
        self.flops += fl
        self.linear_flops += fl
        self.butterfly_mults += count * 4 * (n // 2) * levels * rows

    def add_fft(self, n: int, transforms: int):
        if n > 1:
            fl = 10 * (n // 2) * log2_int(n) * transforms  # 4 mul + 6 add per pair
            self.flops += fl
            self.fft_flops += fl

    def add_attention_matmuls(self, seq: int, d_hid: int):
        fl = 2 * 2 * seq * seq * d_hid  # QK^T and SV, 2*N_l^2*D_hid each
        self.flops += fl
        self.attention_flops += fl

    def add_dense_linear(self, rows: int, m: int, k: int, count: int = 1):
        self.params += count * m * k
        fl = count * 2 * rows * m * k
        self.flops += fl
        self.linear_flops += fl


def count_flops_params(cfg: FabNetConfig, family: str) -> CountReport:
    """Closed-form forward-pass FLOPs and parameter counts for one model.

    Butterfly and FFT terms are charged at the padded power-of-two sizes;
    dense families run at the native sizes.  Normalization, softmax and
    activation nonlinearities are not counted.
    """
    family = normalize_family(family)
    rep = CountReport(family=family)
    seq, d = cfg.seq_len, cfg.d_hid
    dp, sp = cfg.d_pad, cfg.seq_pad

    if family == "fabnet":
        for _ in range(cfg.n_fbfly):
            rep.add_fft(dp, transforms=seq)
            rep.add_fft(sp, transforms=dp)
            rep.add_butterfly_linear(dp, rows=seq, count=2 * cfg.r_ffn)
        for _ in range(cfg.n_abfly):
            rep.add_butterfly_linear(dp, rows=seq, count=4)  # Q, K, V, output
            rep.add_attention_matmuls(seq, d)
            rep.add_butterfly_linear(dp, rows=seq, count=2 * cfg.r_ffn)
    elif family == "transformer":
        for _ in range(cfg.n_total):
            rep.add_dense_linear(seq, d, d, count=4)
            rep.add_attention_matmuls(seq, d)
            rep.add_dense_linear(seq, cfg.r_ffn * d, d)
            rep.add_dense_linear(seq, d, cfg.r_ffn * d)
    else:  # fnet
        for _ in range(cfg.n_total):
            rep.add_fft(dp, transforms=seq)
            rep.add_fft(sp, transforms=dp)
            rep.add_dense_linear(seq, cfg.r_ffn * d, d)
            rep.add_dense_linear(seq, d, cfg.r_ffn * d)
    return rep


def dense_stage_flops(cfg: FabNetConfig, family: str) -> list[tuple[str, int]]:
    """Per-matmul-stage FLOP list for the MAC-array baseline.

    The baseline has no butterfly or FFT support: Fourier layers become
    dense DFT-matrix multiplies and butterfly linears run at their dense
    equivalent size, all at native (unpadded) dimensions.
    """
    family = normalize_family(family)
    seq, d, r = cfg.seq_len, cfg.d_hid, cfg.r_ffn
    stages: list[tuple[str, int]] = []

    def dense(name, rows, m, k):
        stages.append((name, 2 * rows * m * k))

    def ffn(i):
        dense(f"block{i}.ffn1", seq, r * d, d)
        dense(f"block{i}.ffn2", seq, d, r * d)

    def attention(i):
        for p in ("q", "k", "v"):
            dense(f"block{i}.{p}_proj", seq, d, d)
        stages.append((f"block{i}.qk", 2 * seq * seq * d))
        stages.append((f"block{i}.sv", 2 * seq * seq * d))
        dense(f"block{i}.o_proj", seq, d, d)

    if family == "transformer":
        for i in range(cfg.n_total):
            attention(i)
            ffn(i)
    elif family == "fabnet":
        for i in range(cfg.n_fbfly):
            dense(f"block{i}.dft_hidden", seq, d, d)
            dense(f"block{i}.dft_seq", d, seq, seq)
            ffn(i)
        for i in range(cfg.n_fbfly, cfg.n_total):
            attention(i)
            ffn(i)
    else:
        raise ConfigError("baseline families are 'transformer' and 'fabnet'")
    return stages


# --- file formats -------------------------------------------------------------

_MODEL_FIELDS = {"d_hid", "r_ffn", "n_total", "n_abfly", "n_heads", "seq_len", "pad_policy"}


def load_model_config(source) -> FabNetConfig:
    """Strict fabnet.json loader: unknown fields are rejected."""
    if isinstance(source, dict):
        obj = source
    else:
        with open(source) as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"malformed model JSON at line {exc.lineno}: {exc.msg}") from exc
    unknown = set(obj) - _MODEL_FIELDS
    if unknown:
        raise ConfigError(f"unknown model config fields: {sorted(unknown)}")
    missing = (_MODEL_FIELDS - {"pad_policy"}) - set(obj)
    if missing:
        raise ConfigError(f"missing model config fields: {sorted(missing)}")
    return FabNetConfig(**obj)


def _ln_to_json(gamma, beta):
    return {"gamma": [float(v) for v in gamma], "beta": [float(v) for v in beta]}


def weights_to_json(blocks) -> dict:
    out = []
    for b in blocks:
        entry = {
            "kind": b.kind,
            "ffn1": [butterfly_to_json(m) for m in b.ffn1],
            "ffn2": [butterfly_to_json(m) for m in b.ffn2],
            "ln1": _ln_to_json(b.ln1_gamma, b.ln1_beta),
            "ln2": _ln_to_json(b.ln2_gamma, b.ln2_beta),
        }
        if b.kind == "abfly":
            entry.update({r: butterfly_to_json(getattr(b, r)) for r in ("q", "k", "v", "o")})
        out.append(entry)
    return {"blocks": out}


def weights_from_json(obj: dict) -> list[BlockWeights]:
    blocks = []
    for entry in obj["blocks"]:
        kw = {}
        if entry["kind"] == "abfly":
            kw = {r: butterfly_from_json(entry[r]) for r in ("q", "k", "v", "o")}
        blocks.append(
            BlockWeights(
                kind=entry["kind"],
                ffn1=tuple(butterfly_from_json(m) for m in entry["ffn1"]),
                ffn2=tuple(butterfly_from_json(m) for m in entry["ffn2"]),
                ln1_gamma=np.asarray(entry["ln1"]["gamma"], dtype=np.float64),
                ln1_beta=np.asarray(entry["ln1"]["beta"], dtype=np.float64),
                ln2_gamma=np.asarray(entry["ln2"]["gamma"], dtype=np.float64),
                ln2_beta=np.asarray(entry["ln2"]["beta"], dtype=np.float64),
                **kw,
            )
        )
    return blocks


def save_activations(path, x) -> None:
    """Write a token matrix as CSV (by extension) or the 16-byte-header binary."""
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if x.ndim != 2:
        raise ShapeError("activations must be 2-D")
    if str(path).endswith(".csv"):
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(x.tolist())
        return
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QQ", x.shape[0], x.shape[1]))
        fh.write(x.astype("<f8").tobytes(order="C"))


def load_activations(path) -> np.ndarray:
    if str(path).endswith(".csv"):
        with open(path, newline="") as fh:
            rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
        return np.asarray(rows, dtype=np.float64)
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16:
            raise ConfigError("activation file too short for the 16-byte header")
        rows, cols = struct.unpack("<QQ", header)
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != rows * cols:
        raise ConfigError(f"activation payload has {data.size} values, header says {rows}x{cols}")
    return data.reshape(rows, cols).astype(np.float64)

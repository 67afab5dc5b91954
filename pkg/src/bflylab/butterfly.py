"""Butterfly factor matrices, the dual-mode butterfly-unit datapath, and radix-2 FFT.

A butterfly matrix of size N is an ordered list of log2(N) sparse stages.
Stage `level` pairs indices at stride N >> (level+1): the first executed
stage couples i with i + N/2, the last couples neighbours.  Applying the
stages in list order is therefore equivalent to multiplying by the dense
stage product with the level-0 factor rightmost; `expand_dense` builds
exactly that product so the two routes can be checked against each other.

The FFT is the complex specialization of the same structure: each pair
carries one unit-modulus twiddle, the per-pair update is one complex
multiply (4 real multiplies) plus add/sub, and the stage schedule visits
the same index pairs as the real butterfly.  Data stays at its original
index during all stages; the output permutation back to natural frequency
order happens once at the end.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, NumericDomainError, ShapeError

__all__ = [
    "BuMode",
    "ButterflyStage",
    "ButterflyMatrix",
    "ComplexVec",
    "OpCounter",
    "bu_step",
    "apply_butterfly",
    "expand_dense",
    "fft",
    "fft_array",
    "fft_as_butterfly",
    "dft_naive",
    "quantize_fp16",
    "identity_butterfly",
    "random_butterfly",
    "bit_reverse_permutation",
    "butterfly_to_json",
    "butterfly_from_json",
]


class BuMode(Enum):
    """Operating mode of the butterfly unit, fixed before a layer runs."""

    BUTTERFLY_LINEAR = "butterfly_linear"
    FFT = "fft"


@dataclass
class OpCounter:
    """Per-invocation arithmetic counters (no global state)."""

    mul: int = 0
    add: int = 0
    bu_calls: int = 0


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def log2_int(n: int) -> int:
    if not _is_pow2(n):
        raise ConfigError(f"{n} is not a power of two")
    return n.bit_length() - 1


def next_pow2(n: int) -> int:
    if n < 1:
        raise ConfigError(f"dimension must be >= 1, got {n}")
    return 1 << (n - 1).bit_length()


def pair_low_indices(size: int, stride: int) -> np.ndarray:
    """Ascending low indices of the N/2 pairs (i, i + stride)."""
    idx = np.arange(size)
    return idx[(idx & stride) == 0]


@dataclass(frozen=True)
class ButterflyStage:
    """One sparse factor: per pair a (w1, w2, w3, w4) block, or one twiddle in FFT mode.

    coeffs has shape (size/2, 4) float64 for the linear mode and shape
    (size/2,) complex128 for the FFT mode; row b belongs to the b-th pair
    in ascending low-index order.
    """

    level: int
    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.coeffs)
        arr = arr.astype(np.complex128 if np.iscomplexobj(arr) else np.float64, copy=False)
        if not np.all(np.isfinite(arr)):
            raise NumericDomainError("stage coefficients must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)


@dataclass(frozen=True)
class ButterflyMatrix:
    size: int
    stages: tuple[ButterflyStage, ...]
    mode: BuMode = BuMode.BUTTERFLY_LINEAR

    def __post_init__(self):
        levels = log2_int(self.size)
        if len(self.stages) != levels:
            raise ConfigError(
                f"need log2({self.size}) = {levels} stages, got {len(self.stages)}"
            )
        for s, stage in enumerate(self.stages):
            if stage.level != s:
                raise ConfigError(f"stage {s} carries level {stage.level}")
            n_pairs = self.size // 2
            if self.mode is BuMode.BUTTERFLY_LINEAR:
                if stage.coeffs.shape != (n_pairs, 4):
                    raise ShapeError(
                        f"stage {s}: expected coeffs ({n_pairs}, 4), got {stage.coeffs.shape}"
                    )
            else:
                if stage.coeffs.shape != (n_pairs,):
                    raise ShapeError(
                        f"stage {s}: expected {n_pairs} twiddles, got {stage.coeffs.shape}"
                    )

    @property
    def levels(self) -> int:
        return len(self.stages)

    def stride_of(self, level: int) -> int:
        return self.size >> (level + 1)

    @property
    def n_params(self) -> int:
        """Trainable parameter count: 4 per pair per stage = 2N log2 N."""
        return 4 * (self.size // 2) * self.levels


@dataclass
class ComplexVec:
    """Split-plane complex carrier: separate real/imaginary float64 arrays."""

    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        self.re = np.asarray(self.re, dtype=np.float64)
        self.im = np.asarray(self.im, dtype=np.float64)
        if self.re.shape != self.im.shape or self.re.ndim != 1:
            raise ShapeError("re/im must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(self.re)) and np.all(np.isfinite(self.im))):
            raise NumericDomainError("ComplexVec entries must be finite")

    def __len__(self) -> int:
        return self.re.shape[0]

    @classmethod
    def from_complex(cls, z) -> "ComplexVec":
        z = np.asarray(z, dtype=np.complex128)
        return cls(z.real.copy(), z.imag.copy())

    def to_complex(self) -> np.ndarray:
        return self.re + 1j * self.im


def _round16(x):
    # round-to-nearest-even binary16, widened back to float64
    return np.float64(np.float16(x))


def quantize_fp16(x: float) -> float:
    """Round a finite real to the nearest binary16 value (ties to even).

    Values above the binary16 range come back as +/-inf, which is the
    overflow flag callers should check for.
    """
    if not math.isfinite(x):
        raise NumericDomainError(f"quantize_fp16 expects a finite input, got {x}")
    with np.errstate(over="ignore"):
        return float(np.float16(x))


def bu_step(mode: BuMode, in1, in2, w, *, fp16: bool = False, counter: OpCounter | None = None):
    """One butterfly-unit evaluation: exactly 4 real multiplies in either mode.

    Linear mode: out1 = in1*w1 + in2*w3, out2 = in1*w2 + in2*w4 with
    w = (w1, w2, w3, w4).  FFT mode: t = w*in2 as one complex multiply,
    out1 = in1 + t, out2 = in1 - t.
    """
    if mode is BuMode.BUTTERFLY_LINEAR:
        a, b = float(in1), float(in2)
        w1, w2, w3, w4 = (float(v) for v in w)
        for v in (a, b, w1, w2, w3, w4):
            if not math.isfinite(v):
                raise NumericDomainError("bu_step inputs must be finite")
        out1 = a * w1 + b * w3
        out2 = a * w2 + b * w4
        if fp16:
            out1 = _round16(out1)
            out2 = _round16(out2)
        if counter is not None:
            counter.mul += 4
            counter.add += 2
            counter.bu_calls += 1
        return out1, out2

    a, b, wc = complex(in1), complex(in2), complex(w)
    for v in (a, b, wc):
        if not (math.isfinite(v.real) and math.isfinite(v.imag)):
            raise NumericDomainError("bu_step inputs must be finite")
    # complex twiddle multiply with 4 real multiplies
    t_re = wc.real * b.real - wc.imag * b.imag
    t_im = wc.real * b.imag + wc.imag * b.real
    out1 = complex(a.real + t_re, a.imag + t_im)
    out2 = complex(a.real - t_re, a.imag - t_im)
    if fp16:
        out1 = complex(_round16(out1.real), _round16(out1.imag))
        out2 = complex(_round16(out2.real), _round16(out2.imag))
    if counter is not None:
        counter.mul += 4
        counter.add += 6
        counter.bu_calls += 1
    return out1, out2


def _apply_stage_linear(x, lo, hi, coeffs, fp16):
    a = x[..., lo]
    b = x[..., hi]
    w1, w2, w3, w4 = coeffs[:, 0], coeffs[:, 1], coeffs[:, 2], coeffs[:, 3]
    o1 = a * w1 + b * w3
    o2 = a * w2 + b * w4
    if fp16:
        o1 = np.float64(np.float16(o1))
        o2 = np.float64(np.float16(o2))
    x[..., lo] = o1
    x[..., hi] = o2


def _apply_stage_fft(x, lo, hi, twiddles, fp16):
    a = x[..., lo]
    b = x[..., hi]
    # explicit re/im arithmetic keeps this bit-identical to the scalar bu_step
    t_re = twiddles.real * b.real - twiddles.imag * b.imag
    t_im = twiddles.real * b.imag + twiddles.imag * b.real
    o1_re, o1_im = a.real + t_re, a.imag + t_im
    o2_re, o2_im = a.real - t_re, a.imag - t_im
    if fp16:
        o1_re = np.float64(np.float16(o1_re))
        o1_im = np.float64(np.float16(o1_im))
        o2_re = np.float64(np.float16(o2_re))
        o2_im = np.float64(np.float16(o2_im))
    x[..., lo] = o1_re + 1j * o1_im
    x[..., hi] = o2_re + 1j * o2_im


def apply_butterfly(
    m: ButterflyMatrix,
    x,
    *,
    fp16: bool = False,
    counter: OpCounter | None = None,
) -> np.ndarray:
    """Apply the staged butterfly to a vector or to each row of a matrix.

    Stages run in list order (widest stride first).  With a counter the
    computation is routed pair-by-pair through `bu_step` so multiply
    counts reflect the 4-multiplier datapath; otherwise the stage update
    is vectorized with identical arithmetic.
    """
    want_complex = m.mode is BuMode.FFT
    x = np.asarray(x, dtype=np.complex128 if want_complex else np.float64)
    if x.shape[-1] != m.size:
        raise ShapeError(f"input length {x.shape[-1]} != matrix size {m.size}")
    if not np.all(np.isfinite(x)):
        raise NumericDomainError("apply_butterfly input must be finite")
    y = x.copy()
    if fp16:
        if want_complex:
            y = np.float64(np.float16(y.real)) + 1j * np.float64(np.float16(y.imag))
        else:
            y = np.float64(np.float16(y))

    for stage in m.stages:
        stride = m.stride_of(stage.level)
        lo = pair_low_indices(m.size, stride)
        hi = lo + stride
        if counter is None:
            if want_complex:
                _apply_stage_fft(y, lo, hi, stage.coeffs, fp16)
            else:
                _apply_stage_linear(y, lo, hi, stage.coeffs, fp16)
        else:
            rows = y.reshape(-1, m.size)
            for r in range(rows.shape[0]):
                for b in range(lo.shape[0]):
                    i, j = lo[b], hi[b]
                    if want_complex:
                        o1, o2 = bu_step(
                            BuMode.FFT, rows[r, i], rows[r, j], stage.coeffs[b],
                            fp16=fp16, counter=counter,
                        )
                    else:
                        o1, o2 = bu_step(
                            BuMode.BUTTERFLY_LINEAR, rows[r, i], rows[r, j],
                            stage.coeffs[b], fp16=fp16, counter=counter,
                        )
                    rows[r, i] = o1
                    rows[r, j] = o2
            y = rows.reshape(y.shape)
    return y


def _stage_to_sparse(m: ButterflyMatrix, stage: ButterflyStage):
    n = m.size
    stride = m.stride_of(stage.level)
    lo = pair_low_indices(n, stride)
    hi = lo + stride
    if m.mode is BuMode.FFT:
        tw = stage.coeffs
        quads = np.stack([np.ones_like(tw), np.ones_like(tw), tw, -tw], axis=1)
        dtype = np.complex128
    else:
        quads = stage.coeffs
        dtype = np.float64
    rows = np.concatenate([lo, lo, hi, hi])
    cols = np.concatenate([lo, hi, lo, hi])
    data = np.concatenate([quads[:, 0], quads[:, 2], quads[:, 1], quads[:, 3]]).astype(dtype)
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def expand_dense(m: ButterflyMatrix) -> np.ndarray:
    """Dense stage product, level-0 factor rightmost: expand_dense(m) @ x == apply_butterfly(m, x)."""
    acc = _stage_to_sparse(m, m.stages[0])
    for stage in m.stages[1:]:
        acc = _stage_to_sparse(m, stage) @ acc
    return acc.toarray()


@lru_cache(maxsize=None)
def bit_reverse_permutation(n: int) -> np.ndarray:
    """perm[k] = bit-reversal of k over log2(n) bits (read-only, cached)."""
    bits = log2_int(n)
    perm = np.zeros(n, dtype=np.int64)
    for k in range(n):
        r = 0
        v = k
        for _ in range(bits):
            r = (r << 1) | (v & 1)
            v >>= 1
        perm[k] = r
    perm.setflags(write=False)
    return perm


@lru_cache(maxsize=None)
def fft_as_butterfly(n: int) -> ButterflyMatrix:
    """The radix-2 FFT expressed as a complex-twiddle butterfly matrix.

    Stage s pairs original indices at stride n >> (s+1); the twiddle of the
    pair with low index `lo` is exp(-2*pi*i * j / 2^(s+1)) with
    j = rev(lo) mod 2^s.  Applying the stages in place and permuting the
    result by bit reversal yields the natural-order forward DFT.
    """
    levels = log2_int(n)
    rev = bit_reverse_permutation(n)
    stages = []
    for s in range(levels):
        stride = n >> (s + 1)
        lo = pair_low_indices(n, stride)
        j = rev[lo] & ((1 << s) - 1)
        tw = np.exp(-2j * np.pi * j / float(1 << (s + 1)))
        stages.append(ButterflyStage(level=s, coeffs=tw.astype(np.complex128)))
    return ButterflyMatrix(size=n, stages=tuple(stages), mode=BuMode.FFT)


def fft_array(x, *, fp16: bool = False, counter: OpCounter | None = None) -> np.ndarray:
    """Forward unnormalized DFT (negative exponent) of power-of-two length.

    Accepts a vector or a matrix of row transforms; runs the shared
    butterfly stage schedule and recovers natural output order.
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n == 1:
        return x.copy()
    m = fft_as_butterfly(n)
    y = apply_butterfly(m, x, fp16=fp16, counter=counter)
    return y[..., bit_reverse_permutation(n)]


def fft(x: ComplexVec, *, fp16: bool = False, counter: OpCounter | None = None) -> ComplexVec:
    """Forward DFT of a ComplexVec via the butterfly engine (natural order)."""
    if not _is_pow2(len(x)):
        raise ConfigError(f"FFT length must be a power of two, got {len(x)}")
    return ComplexVec.from_complex(fft_array(x.to_complex(), fp16=fp16, counter=counter))


def dft_naive(x) -> np.ndarray:
    """Quadratic-time reference DFT (independent of the staged engine)."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    out = np.empty_like(x)
    ang = -2j * np.pi / n
    idx = np.arange(n)
    chunk = max(1, (1 << 22) // max(n, 1))  # bound the k x n phase block
    for k0 in range(0, n, chunk):
        k = idx[k0 : k0 + chunk]
        phases = np.exp(ang * np.outer(k, idx))
        out[..., k0 : k0 + chunk] = x @ phases.T
    return out


def identity_butterfly(n: int) -> ButterflyMatrix:
    levels = log2_int(n)
    quads = np.tile(np.array([1.0, 0.0, 0.0, 1.0]), (n // 2, 1))
    stages = tuple(ButterflyStage(level=s, coeffs=quads.copy()) for s in range(levels))
    return ButterflyMatrix(size=n, stages=stages)


def random_butterfly(n: int, rng: np.random.Generator, scale: float | None = None) -> ButterflyMatrix:
    """Random stage coefficients; test/bench scaffolding, not a trained init."""
    levels = log2_int(n)
    if scale is None:
        scale = 1.0 / math.sqrt(2.0)
    stages = tuple(
        ButterflyStage(level=s, coeffs=rng.normal(0.0, scale, size=(n // 2, 4)))
        for s in range(levels)
    )
    return ButterflyMatrix(size=n, stages=stages)


def butterfly_to_json(m: ButterflyMatrix) -> dict:
    """JSON form with fixed field names: {size, stages:[{level, pairs:[[w1,w2,w3,w4],..]}]}."""
    if m.mode is not BuMode.BUTTERFLY_LINEAR:
        raise ConfigError("only butterfly-linear matrices serialize to JSON")
    return {
        "size": m.size,
        "stages": [
            {"level": st.level, "pairs": [[float(v) for v in row] for row in st.coeffs]}
            for st in m.stages
        ],
    }


def butterfly_from_json(obj: dict) -> ButterflyMatrix:
    try:
        size = int(obj["size"])
        stages = tuple(
            ButterflyStage(
                level=int(st["level"]),
                coeffs=np.asarray(st["pairs"], dtype=np.float64),
            )
            for st in obj["stages"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed butterfly JSON: {exc}") from exc
    return ButterflyMatrix(size=size, stages=stages)


def save_butterfly(path, m: ButterflyMatrix) -> None:
    with open(path, "w") as fh:
        json.dump(butterfly_to_json(m), fh)


def load_butterfly(path) -> ButterflyMatrix:
    with open(path) as fh:
        return butterfly_from_json(json.load(fh))

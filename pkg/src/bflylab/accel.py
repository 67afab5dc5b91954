"""Cycle-level performance and resource model of the butterfly accelerator.

The machine: a butterfly processor of p_be engines, each with p_bu
four-multiplier butterfly units and double-buffered on-chip memory; an
optional attention processor of p_head engines with p_qk/p_sv multiplier
lanes; a post-processing unit for shortcut add and layer normalization.
Activations round-trip off-chip between layers; butterfly weights stream
once per layer invocation.

Per layer a batch is p_be rows, each engine transforming one row.  A
batch's compute is log2(n) stages of ceil((n/2)/p_bu) cycles plus a fixed
pipeline-fill constant per stage.  Butterfly-linear layers ping-pong
input, weight and output buffers independently, so everything but the
first load and last store overlaps compute.  FFT layers carry complex
words (twice the bytes, half the buffer capacity) and only overlap a
batch's output store with the next batch's input load.

All fill/drain constants are explicit HardwareConfig fields.  Nothing
here mutates shared state; every function is deterministic in its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import CapacityError, ConfigError
from .fabnet import FabNetConfig, dense_stage_flops, normalize_family

__all__ = [
    "HardwareConfig",
    "LayerCycles",
    "LayerEntry",
    "LatencyReport",
    "ResourceReport",
    "AttentionTiming",
    "sim_butterfly_layer",
    "sim_fft_layer",
    "sim_attention",
    "attention_reduction_cycles",
    "sim_network",
    "resource_model",
    "sim_baseline_mac",
    "bandwidth_sweep",
    "BandwidthSweep",
    "required_buffer_depth",
]

PRECISION_BYTES = {"fp16": 2, "fp64": 8}


def _pow2_or_zero(v: int) -> bool:
    return v == 0 or (v >= 1 and (v & (v - 1)) == 0)


@dataclass(frozen=True)
class HardwareConfig:
    p_be: int
    p_bu: int
    p_qk: int = 0
    p_sv: int = 0
    p_head: int = 0
    clock_hz: float = 200e6
    bandwidth_bytes_per_s: float = 450e9  # one HBM stack
    bytes_per_word: int = 2
    buffer_depth: int = 1024
    stage_fill_cycles: int = 8
    postp_words_per_cycle: int = 16
    dsp_per_mult: float = 1.0
    bram_bits: int = 36 * 1024

    def __post_init__(self):
        # p_be counts whole engines and may be any positive size (the shipped
        # designs use 40 and 120); per-engine lane counts stay powers of two.
        for name in ("p_bu", "p_qk", "p_sv", "p_head"):
            if not _pow2_or_zero(getattr(self, name)):
                raise ConfigError(f"{name} must be zero or a power of two")
        if self.p_be < 0:
            raise ConfigError("p_be must be non-negative")
        if (self.p_qk == 0) != (self.p_head == 0) or (self.p_sv == 0) != (self.p_head == 0):
            raise ConfigError("p_qk and p_sv must be zero exactly when p_head is zero")
        if self.clock_hz <= 0 or self.bandwidth_bytes_per_s <= 0:
            raise ConfigError("clock_hz and bandwidth must be positive")
        if self.bytes_per_word not in (2, 8):
            raise ConfigError("bytes_per_word must be 2 (fp16) or 8 (fp64)")
        if self.buffer_depth < 2 or self.stage_fill_cycles < 0 or self.postp_words_per_cycle < 1:
            raise ConfigError("invalid buffer/pipeline constants")


@dataclass(frozen=True)
class LayerCycles:
    compute: int
    transfer: int
    exposed: int


@dataclass(frozen=True)
class LayerEntry:
    layer: str
    kind: str  # butterfly | fft | attention | postp | mac
    compute_cycles: int
    transfer_cycles: int
    exposed_cycles: int


@dataclass
class LatencyReport:
    clock_hz: float
    entries: list[LayerEntry] = field(default_factory=list)

    def add(self, layer: str, kind: str, cycles: LayerCycles):
        self.entries.append(
            LayerEntry(layer, kind, cycles.compute, cycles.transfer, cycles.exposed)
        )

    @property
    def total_compute(self) -> int:
        return sum(e.compute_cycles for e in self.entries)

    @property
    def total_transfer(self) -> int:
        return sum(e.transfer_cycles for e in self.entries)

    @property
    def total_exposed(self) -> int:
        return sum(e.exposed_cycles for e in self.entries)

    @property
    def seconds(self) -> float:
        return self.total_exposed / self.clock_hz

    def to_rows(self) -> list[dict]:
        rows = [
            {
                "layer": e.layer,
                "kind": e.kind,
                "compute_cycles": e.compute_cycles,
                "transfer_cycles": e.transfer_cycles,
                "exposed_cycles": e.exposed_cycles,
                "seconds": e.exposed_cycles / self.clock_hz,
            }
            for e in self.entries
        ]
        rows.append(
            {
                "layer": "total",
                "kind": "total",
                "compute_cycles": self.total_compute,
                "transfer_cycles": self.total_transfer,
                "exposed_cycles": self.total_exposed,
                "seconds": self.seconds,
            }
        )
        return rows


@dataclass(frozen=True)
class ResourceReport:
    multipliers: int
    bram_bfly: int
    bram_weight: int
    bram_key: int
    bram_query: int
    bram_shortcut: int
    dsp_equivalent: float

    @property
    def bram_total(self) -> int:
        return (
            self.bram_bfly
            + self.bram_weight
            + self.bram_key
            + self.bram_query
            + self.bram_shortcut
        )


@dataclass(frozen=True)
class AttentionTiming:
    """Row-granular attention timings; t_qk/m_rows is the per-row QK time."""

    m_rows: int
    l_rows: int
    t_qk: int
    t_sv: int
    t_q: int = 0
    t_k: int = 0
    t_v: int = 0

    def __post_init__(self):
        if self.m_rows < 1 or self.l_rows < 1:
            raise ConfigError("attention needs m_rows, l_rows >= 1")
        if min(self.t_qk, self.t_sv, self.t_q, self.t_k, self.t_v) < 0:
            raise ConfigError("attention timings must be non-negative")


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def _xfer_cycles(nbytes: float, hw: HardwareConfig) -> int:
    if math.isinf(hw.bandwidth_bytes_per_s):
        return 0
    return math.ceil(nbytes * hw.clock_hz / hw.bandwidth_bytes_per_s)


def _batch_compute(n: int, hw: HardwareConfig) -> int:
    """Cycles for one batch (one row per engine) through all log2(n) stages."""
    levels = n.bit_length() - 1
    return levels * (_ceil_div(n // 2, hw.p_bu) + hw.stage_fill_cycles)


def _check_bp(hw: HardwareConfig):
    if hw.p_be < 1 or hw.p_bu < 1:
        raise ConfigError("butterfly layers need p_be >= 1 and p_bu >= 1")


def sim_butterfly_layer(rows: int, n: int, hw: HardwareConfig) -> LayerCycles:
    """Butterfly-linear layer: `rows` transforms of width n (power of two).

    Overlap: input/weight/output buffers ping-pong independently, so
    exposed = first fill (first batch input + streamed weights)
            + max(compute, remaining input transfer)
            + last batch output drain.
    """
    _check_bp(hw)
    if n & (n - 1) or n < 1:
        raise ConfigError(f"layer width {n} is not a power of two")
    if n > hw.buffer_depth:
        raise CapacityError(f"width {n} exceeds buffer depth {hw.buffer_depth}")
    if rows < 1:
        raise ConfigError("rows must be >= 1")
    levels = n.bit_length() - 1
    batches = _ceil_div(rows, hw.p_be)
    compute = batches * _batch_compute(n, hw)

    bpw = hw.bytes_per_word
    in_bytes = rows * n * bpw
    out_bytes = rows * n * bpw
    weight_bytes = 2 * n * levels * bpw  # 4 coefficients per pair, n/2 pairs, per stage
    first_rows = min(rows, hw.p_be)
    last_rows = rows - (batches - 1) * hw.p_be

    fill = _xfer_cycles(first_rows * n * bpw + weight_bytes, hw)
    remaining_in = _xfer_cycles((rows - first_rows) * n * bpw, hw)
    drain = _xfer_cycles(last_rows * n * bpw, hw)
    exposed = fill + max(compute, remaining_in) + drain
    # accounted at the same granularity the overlap model uses, so that
    # exposed <= compute + transfer holds exactly under integer cycles
    transfer = fill + remaining_in + _xfer_cycles(out_bytes, hw)
    return LayerCycles(compute=compute, transfer=transfer, exposed=exposed)


def sim_fft_layer(rows: int, n: int, hw: HardwareConfig) -> LayerCycles:
    """FFT layer: complex words double the data width and halve the buffer.

    The two ping-pong banks share ports, so a batch's compute overlaps
    only the previous store and the next load:
    exposed = load_0 + sum_i max(compute_i, store_{i-1} + load_{i+1}) + store_last.
    Twiddles are generated on chip; no weight traffic.
    """
    _check_bp(hw)
    if n & (n - 1) or n < 1:
        raise ConfigError(f"FFT length {n} is not a power of two")
    if n > hw.buffer_depth // 2:
        raise CapacityError(
            f"FFT length {n} exceeds {hw.buffer_depth // 2} complex words per bank"
        )
    if rows < 1:
        raise ConfigError("rows must be >= 1")
    word_bytes = 2 * hw.bytes_per_word  # re + im
    batches = _ceil_div(rows, hw.p_be)
    batch_rows = [hw.p_be] * (batches - 1) + [rows - (batches - 1) * hw.p_be]
    c = _batch_compute(n, hw)
    loads = [_xfer_cycles(r * n * word_bytes, hw) for r in batch_rows]
    stores = loads[:]  # symmetric complex output

    exposed = loads[0]
    for i in range(batches):
        bus = (stores[i - 1] if i > 0 else 0) + (loads[i + 1] if i + 1 < batches else 0)
        exposed += max(c, bus)
    exposed += stores[-1]

    compute = batches * c
    transfer = sum(loads) + sum(stores)
    return LayerCycles(compute=compute, transfer=transfer, exposed=exposed)


def attention_reduction_cycles(at: AttentionTiming) -> int:
    """ceil(((M-1)/M)*T(QK) + ((L-1)/L)*T(SV)) in exact integer arithmetic."""
    m, l = at.m_rows, at.l_rows
    num = (m - 1) * at.t_qk * l + (l - 1) * at.t_sv * m
    return _ceil_div(num, m * l)


def sim_attention(at: AttentionTiming, pipelined: bool) -> int:
    """Attention latency; K and V projections run first, then Q streams.

    Pipelined mode overlaps QK with Q generation and SV with QK, hiding
    all but one row of each unit's work.
    """
    naive = at.t_q + at.t_k + at.t_v + at.t_qk + at.t_sv
    if not pipelined:
        return naive
    return naive - attention_reduction_cycles(at)


def required_buffer_depth(cfg: FabNetConfig) -> int:
    """Smallest buffer depth that fits the model's widest transform.

    FFT banks hold complex words at half depth, so the sequence-direction
    FFT is the binding constraint for long inputs.
    """
    depth = max(cfg.d_pad, 1024)
    if cfg.n_fbfly:
        depth = max(depth, 2 * cfg.d_pad, 2 * cfg.seq_pad)
    return depth


def _postp_cycles(cfg: FabNetConfig, hw: HardwareConfig) -> LayerCycles:
    words = cfg.seq_len * cfg.d_hid
    compute = _ceil_div(words, hw.postp_words_per_cycle)
    # streams alongside the block's output; only one row in and one out show up
    exposed = 2 * _ceil_div(cfg.d_hid, hw.postp_words_per_cycle)
    return LayerCycles(compute=compute, transfer=0, exposed=exposed)


def sim_network(cfg: FabNetConfig, hw: HardwareConfig, precision: str = "fp16") -> LatencyReport:
    """Per-layer latency of a full FABNet forward pass on the accelerator."""
    if precision not in PRECISION_BYTES:
        raise ConfigError(f"precision must be one of {sorted(PRECISION_BYTES)}")
    hw = replace(hw, bytes_per_word=PRECISION_BYTES[precision])
    _check_bp(hw)
    if cfg.n_abfly > 0 and hw.p_head < 1:
        raise ConfigError("n_abfly > 0 requires an attention processor (p_head >= 1)")

    report = LatencyReport(clock_hz=hw.clock_hz)
    seq, dp, sp = cfg.seq_len, cfg.d_pad, cfg.seq_pad
    ffn_rows = seq * cfg.r_ffn

    for i in range(cfg.n_fbfly):
        report.add(f"block{i}.fft_hidden", "fft", sim_fft_layer(seq, dp, hw))
        report.add(f"block{i}.fft_seq", "fft", sim_fft_layer(dp, sp, hw))
        report.add(f"block{i}.ffn_expand", "butterfly", sim_butterfly_layer(ffn_rows, dp, hw))
        report.add(f"block{i}.ffn_contract", "butterfly", sim_butterfly_layer(ffn_rows, dp, hw))
        report.add(f"block{i}.postp", "postp", _postp_cycles(cfg, hw))

    for i in range(cfg.n_fbfly, cfg.n_total):
        projections = {}
        for name in ("q", "k", "v"):
            lc = sim_butterfly_layer(seq, dp, hw)
            projections[name] = lc.compute
            report.add(f"block{i}.{name}_proj", "butterfly", lc)
        head_groups = _ceil_div(cfg.n_heads, hw.p_head)
        t_qk = head_groups * _ceil_div(seq * seq * cfg.d_head, hw.p_qk)
        t_sv = head_groups * _ceil_div(seq * seq * cfg.d_head, hw.p_sv)
        at = AttentionTiming(
            m_rows=seq,
            l_rows=seq,
            t_qk=t_qk,
            t_sv=t_sv,
            t_q=projections["q"],
            t_k=projections["k"],
            t_v=projections["v"],
        )
        pipelined = sim_attention(at, pipelined=True)
        attn_exposed = pipelined - (at.t_q + at.t_k + at.t_v)
        report.add(
            f"block{i}.attention",
            "attention",
            LayerCycles(compute=t_qk + t_sv, transfer=0, exposed=attn_exposed),
        )
        report.add(f"block{i}.o_proj", "butterfly", sim_butterfly_layer(seq, dp, hw))
        report.add(f"block{i}.ffn_expand", "butterfly", sim_butterfly_layer(ffn_rows, dp, hw))
        report.add(f"block{i}.ffn_contract", "butterfly", sim_butterfly_layer(ffn_rows, dp, hw))
        report.add(f"block{i}.postp", "postp", _postp_cycles(cfg, hw))
    return report


def resource_model(hw: HardwareConfig, cfg: FabNetConfig | None = None) -> ResourceReport:
    """Analytical multiplier and BRAM usage.

    Multipliers: p_be*p_bu*4 + p_head*(p_qk + p_sv).  Buffers are sized by
    buffer_depth at the configured word width, two banks each for
    ping-pong, and counted in bram_bits blocks.
    """
    multipliers = hw.p_be * hw.p_bu * 4 + hw.p_head * (hw.p_qk + hw.p_sv)
    word_bits = hw.bytes_per_word * 8
    per_buffer = _ceil_div(hw.buffer_depth * word_bits, hw.bram_bits)
    per_weight_buffer = _ceil_div(2 * hw.buffer_depth * word_bits, hw.bram_bits)
    return ResourceReport(
        multipliers=multipliers,
        bram_bfly=2 * per_buffer * hw.p_be,
        bram_weight=2 * per_weight_buffer * hw.p_be,
        bram_key=2 * per_buffer * hw.p_head,
        bram_query=2 * per_buffer * hw.p_head,
        bram_shortcut=2 * per_buffer,
        dsp_equivalent=multipliers * hw.dsp_per_mult,
    )


def sim_baseline_mac(
    cfg: FabNetConfig,
    family: str,
    total_multipliers: int,
    clock_hz: float = 200e6,
) -> LatencyReport:
    """MAC-array baseline: load-balanced pipeline of dense matmul stages.

    Multipliers are apportioned proportionally to per-stage FLOPs and each
    stage costs ops/(2*assigned) cycles; Fourier layers run as dense DFT
    matmuls and butterfly linears at their dense-equivalent size.  Used
    for speedup ratios only; no memory system is modeled.
    """
    family = normalize_family(family)
    if total_multipliers < 1:
        raise ConfigError("total_multipliers must be >= 1")
    stages = dense_stage_flops(cfg, family)
    total_ops = sum(f for _, f in stages)
    report = LatencyReport(clock_hz=clock_hz)
    for name, flops in stages:
        assigned = total_multipliers * (flops / total_ops)
        cycles = math.ceil(flops / (2.0 * assigned))
        report.add(name, "mac", LayerCycles(compute=cycles, transfer=0, exposed=cycles))
    return report


@dataclass
class BandwidthSweep:
    bandwidths_bytes_per_s: list[float]
    latencies_seconds: list[float]
    roofline_seconds: float  # infinite-bandwidth latency
    saturation_bandwidth: float | None  # smallest within 1% of the roofline

    def rows(self) -> list[dict]:
        return [
            {"bandwidth_gb_s": bw / 1e9, "seconds": s}
            for bw, s in zip(self.bandwidths_bytes_per_s, self.latencies_seconds)
        ]


def bandwidth_sweep(cfg: FabNetConfig, hw: HardwareConfig, bandwidths, precision: str = "fp16") -> BandwidthSweep:
    bandwidths = sorted(float(b) for b in bandwidths)
    if not bandwidths or bandwidths[0] <= 0:
        raise ConfigError("bandwidth list must be non-empty and positive")
    roofline = sim_network(cfg, replace(hw, bandwidth_bytes_per_s=math.inf), precision).seconds
    latencies = [
        sim_network(cfg, replace(hw, bandwidth_bytes_per_s=bw), precision).seconds
        for bw in bandwidths
    ]
    saturation = None
    for bw, lat in zip(bandwidths, latencies):
        if lat <= roofline * 1.01:
            saturation = bw
            break
    return BandwidthSweep(
        bandwidths_bytes_per_s=bandwidths,
        latencies_seconds=latencies,
        roofline_seconds=roofline,
        saturation_bandwidth=saturation,
    )

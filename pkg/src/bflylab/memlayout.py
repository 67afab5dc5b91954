"""Bank-conflict-free butterfly data layout and its checkers.

Elements live on a logical grid of n_banks rows by N/n_banks columns,
written column-major.  The serial-to-parallel writer rotates column c by
start_positions(c) = -popcount(c) (modulo the bank count), which makes
every butterfly stage's paired reads land in distinct banks.

The per-stage read schedule is derived from the stage stride convention
(widest stride first):

* stride >= n_banks: a pair spans two columns at distance stride/n_banks.
  Each cycle reads the even-residue (then odd-residue) halves of one such
  column pair, giving n_banks/2 pairs per cycle.
* stride < n_banks: both pair members share a column; each cycle reads one
  full column.

Plain column-major and row-major placements evaluated under the same
schedule reproduce the classic stage-1 / stage-3 read conflicts and serve
as negative controls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .butterfly import log2_int
from .errors import ConfigError, LayoutError

__all__ = [
    "start_positions",
    "BankLayout",
    "build_layout",
    "StageAccess",
    "build_stage_access",
    "ConflictReport",
    "check_conflict_free",
    "CoalescedColumn",
    "coalesce_indices",
    "recover_order",
]

SCHEMES = ("s2p", "column-major", "row-major")


def start_positions(n_cols: int) -> list[int]:
    """Per-column rotation offsets: P_0 = 0 and each doubling shifts the
    previous block one more position down, i.e. P_i = -popcount(i)."""
    log2_int(n_cols)
    return [-int(bin(i).count("1")) for i in range(n_cols)]


@dataclass(frozen=True)
class BankLayout:
    n_rows: int
    n_cols: int
    scheme: str = "s2p"

    def __post_init__(self):
        log2_int(self.n_rows)
        log2_int(self.n_cols)
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown layout scheme {self.scheme!r}")

    @property
    def size(self) -> int:
        return self.n_rows * self.n_cols

    def place(self, index: int) -> tuple[int, int]:
        """Map element index -> (bank, offset)."""
        if not 0 <= index < self.size:
            raise ConfigError(f"index {index} out of range for {self.size} elements")
        if self.scheme == "row-major":
            return index // self.n_cols, index % self.n_cols
        col = index // self.n_rows
        row = index % self.n_rows
        if self.scheme == "s2p":
            row = (row + start_positions(self.n_cols)[col]) % self.n_rows
        return row, col

    def bank_of(self, index: int) -> int:
        return self.place(index)[0]

    def is_bijection(self) -> bool:
        seen = {self.place(i) for i in range(self.size)}
        return len(seen) == self.size


def build_layout(n: int, n_banks: int, scheme: str = "s2p") -> BankLayout:
    if n_banks > n:
        raise ConfigError(f"n_banks={n_banks} exceeds N={n}")
    return BankLayout(n_rows=n_banks, n_cols=n // n_banks, scheme=scheme)


@dataclass(frozen=True)
class StageAccess:
    """Read schedule of one butterfly stage: per-cycle butterfly pairs."""

    stage: int
    stride: int
    cycles: tuple[tuple[tuple[int, int], ...], ...]

    def read_sets(self, layout: BankLayout) -> list[set[tuple[int, int]]]:
        """Per-cycle (bank, offset) read sets under a concrete placement."""
        return [
            {layout.place(e) for pair in cyc for e in pair}
            for cyc in self.cycles
        ]


def build_stage_access(n: int, n_banks: int, stage: int, pairs_per_cycle: int | None = None) -> StageAccess:
    levels = log2_int(n)
    if not 0 <= stage < levels:
        raise ConfigError(f"stage {stage} out of range for N={n}")
    b = n_banks
    if pairs_per_cycle is None:
        pairs_per_cycle = max(b // 2, 1)
    if pairs_per_cycle < 1 or 2 * pairs_per_cycle > b:
        raise ConfigError(f"pairs_per_cycle={pairs_per_cycle} needs 2*pairs <= n_banks={b}")
    stride = n >> (stage + 1)
    n_cols = n // b

    cycles: list[tuple[tuple[int, int], ...]] = []
    if stride >= b:
        col_gap = stride // b
        for col in range(n_cols):
            if col & col_gap:
                continue
            base = col * b
            for parity in (0, 1):
                group = tuple((base + m, base + m + stride) for m in range(parity, b, 2))
                if group:
                    cycles.append(group)
    else:
        for col in range(n_cols):
            base = col * b
            group = tuple((base + m, base + m + stride) for m in range(b) if not (m & stride))
            cycles.append(group)

    if pairs_per_cycle < max(b // 2, 1):
        split: list[tuple[tuple[int, int], ...]] = []
        for group in cycles:
            for i in range(0, len(group), pairs_per_cycle):
                split.append(group[i : i + pairs_per_cycle])
        cycles = split
    return StageAccess(stage=stage, stride=stride, cycles=tuple(cycles))


@dataclass
class ConflictReport:
    n: int
    n_banks: int
    scheme: str
    rows: list[tuple[int, int, int]] = field(default_factory=list)  # (stage, cycle, conflicts)

    @property
    def total_conflicts(self) -> int:
        return sum(r[2] for r in self.rows)

    @property
    def conflict_free(self) -> bool:
        return self.total_conflicts == 0

    def per_stage(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for stage, _cycle, c in self.rows:
            out[stage] = out.get(stage, 0) + c
        return out


def check_conflict_free(
    n: int,
    n_banks: int,
    pairs_per_cycle: int | None = None,
    scheme: str = "s2p",
) -> ConflictReport:
    """Count per-cycle bank conflicts of the butterfly schedule under a layout.

    One read port per bank per cycle; a cycle touching a bank k times
    contributes k-1 conflicts for that bank.
    """
    layout = build_layout(n, n_banks, scheme)
    report = ConflictReport(n=n, n_banks=n_banks, scheme=scheme)
    for stage in range(log2_int(n)):
        access = build_stage_access(n, n_banks, stage, pairs_per_cycle)
        for cyc_idx, group in enumerate(access.cycles):
            banks = [layout.bank_of(e) for pair in group for e in pair]
            conflicts = len(banks) - len(set(banks))
            report.rows.append((stage, cyc_idx, conflicts))
    return report


@dataclass(frozen=True)
class CoalescedColumn:
    """Butterfly-unit input pairs recovered from one read column."""

    stride: int
    pairs: tuple[tuple[tuple[int, float], tuple[int, float]], ...]
    source: tuple[int, ...]  # original index order of the column
    shifts: tuple[int, ...] | None = None  # per-source-slot start positions


def coalesce_indices(column, stride: int, n_banks: int | None = None) -> CoalescedColumn:
    """Pair a read column's (index, value) entries across the stage stride bit.

    Output pairs are ordered by ascending low index; each pair's indices
    differ exactly in the stride bit.  Unpairable input is a structural
    error.
    """
    entries = [(int(i), v) for i, v in column]
    source = tuple(i for i, _ in entries)
    if len(set(source)) != len(source):
        raise LayoutError("duplicate indices in column")
    values = dict(entries)
    lows = sorted(i for i in values if not (i & stride))
    pairs = []
    for lo in lows:
        hi = lo | stride
        if hi not in values:
            raise LayoutError(f"index {lo} has no stride-{stride} partner in column")
        pairs.append(((lo, values[lo]), (hi, values[hi])))
    if 2 * len(pairs) != len(entries):
        raise LayoutError("column contains entries that pair with nothing")
    shifts = None
    if n_banks is not None:
        # shift position of each input, from the popcount rule on its column
        shifts = tuple(-int(bin(i // n_banks).count("1")) for i in source)
    return CoalescedColumn(stride=stride, pairs=tuple(pairs), source=source, shifts=shifts)


def recover_order(bu_outputs, coalesced: CoalescedColumn) -> list[tuple[int, float]]:
    """Invert the coalescing permutation: restore the column's storage order.

    bu_outputs carries the (possibly transformed) values tagged with their
    original indices, in the same pair structure coalesce_indices produced.
    """
    tagged: dict[int, float] = {}
    for (lo_i, lo_v), (hi_i, hi_v) in bu_outputs:
        tagged[int(lo_i)] = lo_v
        tagged[int(hi_i)] = hi_v
    if set(tagged) != set(coalesced.source):
        raise LayoutError("output tags do not match the coalesced column")
    return [(i, tagged[i]) for i in coalesced.source]

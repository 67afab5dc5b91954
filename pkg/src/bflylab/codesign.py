"""Joint algorithm/hardware design-space exploration.

Enumerates the Cartesian grid of model hyperparameters and accelerator
parallelisms, scores each point with the cycle model and the analytical
resource model, filters by a device budget and an accuracy-loss
constraint (accuracy comes from an external table, never from training
here), and extracts the Pareto front under (minimize latency, maximize
accuracy).
"""

from __future__ import annotations

import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .accel import HardwareConfig, required_buffer_depth, resource_model, sim_network
from .errors import AccuracyLookupError, ConfigError
from .fabnet import FabNetConfig

__all__ = [
    "SearchSpace",
    "AccuracyTable",
    "DeviceBudget",
    "DesignPoint",
    "alg_key",
    "enumerate_space",
    "evaluate_point",
    "pareto_front",
    "select_design",
    "run_dse",
    "DseResult",
]

_SPACE_FIELDS = {
    "d_hid", "r_ffn", "n_abfly", "n_total",
    "p_be", "p_bu", "p_qk", "p_sv",
    "n_heads", "seq_len", "dataset",
}


@dataclass(frozen=True)
class SearchSpace:
    d_hid: tuple[int, ...]
    r_ffn: tuple[int, ...]
    n_abfly: tuple[int, ...]
    n_total: tuple[int, ...]
    p_be: tuple[int, ...]
    p_bu: tuple[int, ...]
    p_qk: tuple[int, ...]
    p_sv: tuple[int, ...]
    n_heads: int = 2
    seq_len: int = 4096
    dataset: str = "text"

    def __post_init__(self):
        for name in ("d_hid", "r_ffn", "n_abfly", "n_total", "p_be", "p_bu", "p_qk", "p_sv"):
            axis = tuple(sorted(set(int(v) for v in getattr(self, name))))
            if not axis:
                raise ConfigError(f"search axis {name} is empty")
            object.__setattr__(self, name, axis)

    @property
    def size(self) -> int:
        return (
            len(self.d_hid) * len(self.r_ffn) * len(self.n_abfly) * len(self.n_total)
            * len(self.p_be) * len(self.p_bu) * len(self.p_qk) * len(self.p_sv)
        )

    @classmethod
    def from_json(cls, source) -> "SearchSpace":
        if not isinstance(source, dict):
            with open(source) as fh:
                source = json.load(fh)
        unknown = set(source) - _SPACE_FIELDS
        if unknown:
            raise ConfigError(f"unknown search-space fields: {sorted(unknown)}")
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in source.items()}
        return cls(**kwargs)


def alg_key(d_hid: int, r_ffn: int, n_total: int, n_abfly: int) -> str:
    return f"d{d_hid}_r{r_ffn}_t{n_total}_a{n_abfly}"


class AccuracyTable:
    """Dataset -> (baseline accuracy, per-config accuracies).

    Lookups must resolve; a missing entry raises instead of defaulting.
    """

    def __init__(self, datasets: dict):
        self.datasets = datasets
        for name, block in datasets.items():
            if "baseline" not in block or "entries" not in block:
                raise ConfigError(f"accuracy table for {name!r} needs 'baseline' and 'entries'")

    @classmethod
    def load(cls, source) -> "AccuracyTable":
        if not isinstance(source, dict):
            with open(source) as fh:
                source = json.load(fh)
        if set(source) != {"datasets"}:
            raise ConfigError("accuracy table JSON must have exactly one top-level 'datasets' field")
        return cls(source["datasets"])

    def baseline(self, dataset: str) -> float:
        try:
            return float(self.datasets[dataset]["baseline"])
        except KeyError as exc:
            raise AccuracyLookupError(f"no baseline for dataset {dataset!r}") from exc

    def lookup(self, dataset: str, key: str) -> float:
        try:
            return float(self.datasets[dataset]["entries"][key])
        except KeyError as exc:
            raise AccuracyLookupError(f"no accuracy entry for {dataset!r}/{key}") from exc


@dataclass(frozen=True)
class DeviceBudget:
    name: str
    max_multipliers: int
    max_bram: int

    @classmethod
    def from_json(cls, source) -> "DeviceBudget":
        if not isinstance(source, dict):
            with open(source) as fh:
                source = json.load(fh)
        unknown = set(source) - {"name", "max_multipliers", "max_bram"}
        if unknown:
            raise ConfigError(f"unknown device budget fields: {sorted(unknown)}")
        return cls(
            name=str(source.get("name", "device")),
            max_multipliers=int(source["max_multipliers"]),
            max_bram=int(source["max_bram"]),
        )


@dataclass(frozen=True, slots=True)
class DesignPoint:
    d_hid: int
    r_ffn: int
    n_total: int
    n_abfly: int
    p_be: int
    p_bu: int
    p_qk: int
    p_sv: int
    accuracy: float
    latency_seconds: float
    multipliers: int
    bram: int
    feasible: bool
    reason: str = ""

    @property
    def key(self) -> tuple:
        return (
            self.d_hid, self.r_ffn, self.n_total, self.n_abfly,
            self.p_be, self.p_bu, self.p_qk, self.p_sv,
        )

    @property
    def key_str(self) -> str:
        return (
            f"{alg_key(self.d_hid, self.r_ffn, self.n_total, self.n_abfly)}"
            f"_be{self.p_be}_bu{self.p_bu}_qk{self.p_qk}_sv{self.p_sv}"
        )

    @property
    def hw_key(self) -> tuple[int, int, int, int]:
        return (self.p_be, self.p_bu, self.p_qk, self.p_sv)


def enumerate_space(space: SearchSpace) -> list[tuple]:
    """Full Cartesian product in lexicographic axis order (stable, hash-free)."""
    return list(
        itertools.product(
            space.d_hid, space.r_ffn, space.n_total, space.n_abfly,
            space.p_be, space.p_bu, space.p_qk, space.p_sv,
        )
    )


def _structural_reason(point: tuple) -> str:
    _d, _r, _t, a, be, bu, qk, sv = point
    if be < 1 or bu < 1:
        return "no-butterfly-processor"
    if (qk == 0) != (sv == 0):
        return "mismatched-attention-lanes"
    if a > 0 and qk == 0:
        return "attention-without-ap"
    return ""


def evaluate_point(
    point: tuple,
    space: SearchSpace,
    table: AccuracyTable,
    budget: DeviceBudget,
    acc_loss: float,
) -> DesignPoint:
    """Score one (algorithm, hardware) grid point.

    Structurally unrunnable hardware yields an infinite-latency infeasible
    point (the grid sweep must complete); a missing accuracy entry is a
    data error and raises.
    """
    d, r, t, a, be, bu, qk, sv = point
    accuracy = table.lookup(space.dataset, alg_key(d, r, t, a))
    baseline = table.baseline(space.dataset)

    reason = _structural_reason(point)
    latency = math.inf
    multipliers = bram = 0
    if not reason:
        cfg = FabNetConfig(
            d_hid=d, r_ffn=r, n_total=t, n_abfly=a,
            n_heads=space.n_heads, seq_len=space.seq_len,
        )
        p_head = 1 if qk > 0 else 0
        hw = HardwareConfig(
            p_be=be, p_bu=bu, p_qk=qk, p_sv=sv, p_head=p_head,
            buffer_depth=required_buffer_depth(cfg),
        )
        latency = sim_network(cfg, hw, precision="fp16").seconds
        res = resource_model(hw)
        multipliers, bram = res.multipliers, res.bram_total
        if multipliers > budget.max_multipliers or bram > budget.max_bram:
            reason = "resources"
        elif accuracy < baseline - acc_loss:
            reason = "accuracy"
    return DesignPoint(
        d_hid=d, r_ffn=r, n_total=t, n_abfly=a,
        p_be=be, p_bu=bu, p_qk=qk, p_sv=sv,
        accuracy=accuracy, latency_seconds=latency,
        multipliers=multipliers, bram=bram,
        feasible=(reason == ""), reason=reason,
    )


def pareto_front(points) -> list[DesignPoint]:
    """Non-dominated set under (minimize latency, maximize accuracy).

    Strict-in-one, weak-in-the-other dominance; exact ties are all kept.
    Output sorted by latency.
    """
    ordered = sorted(points, key=lambda p: (p.latency_seconds, -p.accuracy, p.key))
    front: list[DesignPoint] = []
    best_acc = -math.inf
    best_acc_latency = None
    for p in ordered:
        if p.accuracy > best_acc:
            best_acc = p.accuracy
            best_acc_latency = p.latency_seconds
            front.append(p)
        elif p.accuracy == best_acc and p.latency_seconds == best_acc_latency:
            front.append(p)  # exact tie with an existing front member
    return front


def select_design(front) -> DesignPoint | None:
    """Lowest-latency feasible member; lexicographic config key breaks ties.

    Returns None when no feasible design exists.
    """
    feasible = [p for p in front if p.feasible]
    if not feasible:
        return None
    return min(feasible, key=lambda p: (p.latency_seconds, p.key))


@dataclass
class DseResult:
    points: list[DesignPoint]
    front: list[DesignPoint]
    selected: DesignPoint | None
    n_enumerated: int


def _evaluate_chunk(args) -> list[DesignPoint]:
    chunk, space, table_data, budget, acc_loss = args
    table = AccuracyTable(table_data)
    return [evaluate_point(p, space, table, budget, acc_loss) for p in chunk]


def run_dse(
    space: SearchSpace,
    table: AccuracyTable,
    budget: DeviceBudget,
    acc_loss: float = 0.01,
    workers: int | None = None,
) -> DseResult:
    """Evaluate the whole grid, build the front, pick the design.

    BFLY_THREADS caps the worker count; evaluation is embarrassingly
    parallel and the merge keeps enumeration order, so the result is
    independent of scheduling.
    """
    grid = enumerate_space(space)
    env_cap = os.environ.get("BFLY_THREADS")
    if workers is None:
        workers = int(env_cap) if env_cap else 1
    elif env_cap:
        workers = min(workers, int(env_cap))
    workers = max(1, workers)

    if workers == 1 or len(grid) < 256:
        points = [evaluate_point(p, space, table, budget, acc_loss) for p in grid]
    else:
        chunk_size = -(-len(grid) // workers)
        chunks = [grid[i : i + chunk_size] for i in range(0, len(grid), chunk_size)]
        jobs = [(c, space, table.datasets, budget, acc_loss) for c in chunks]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_evaluate_chunk, jobs))
        points = [p for chunk in results for p in chunk]

    # constraints filter first, then Pareto: the front is over feasible points
    front = pareto_front([p for p in points if p.feasible])
    return DseResult(
        points=points,
        front=front,
        selected=select_design(front),
        n_enumerated=len(grid),
    )

"""Command-line entry point binding all modules.

Exit codes: 0 success, 1 verification failure, 2 usage or config error.
Every report embeds a run manifest; CSV reports carry it as a leading
`# manifest:` comment line, JSON reports as a `manifest` field.  Report
paths also get a rendered .png figure next to the delimited output
unless --no-plot is given.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .accel import (
    HardwareConfig,
    bandwidth_sweep,
    required_buffer_depth,
    sim_baseline_mac,
    sim_network,
)
from .butterfly import (
    apply_butterfly,
    dft_naive,
    expand_dense,
    fft_array,
    random_butterfly,
)
from .codesign import AccuracyTable, DeviceBudget, SearchSpace, run_dse
from .errors import BflyError, ConfigError
from .fabnet import FAMILIES, count_flops_params, load_model_config, normalize_family
from .memlayout import SCHEMES, check_conflict_free

_HW_FIELDS = {
    "p_be", "p_bu", "p_qk", "p_sv", "p_head",
    "clock_hz", "bandwidth_bytes_per_s", "bytes_per_word", "buffer_depth",
    "stage_fill_cycles", "postp_words_per_cycle", "dsp_per_mult", "bram_bits",
}


def load_hw_config(path) -> HardwareConfig:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed hardware JSON at line {exc.lineno}: {exc.msg}") from exc
    unknown = set(obj) - _HW_FIELDS
    if unknown:
        raise ConfigError(f"unknown hardware config fields: {sorted(unknown)}")
    if "p_be" not in obj or "p_bu" not in obj:
        raise ConfigError("hardware config needs at least p_be and p_bu")
    return HardwareConfig(**obj)


def _manifest(args, subcommand, inputs, outputs, seed=None):
    return {
        "subcommand": subcommand,
        "version": __version__,
        "seed": seed,
        "inputs": {k: str(v) for k, v in inputs.items() if v is not None},
        "outputs": [str(o) for o in outputs if o is not None],
    }


def _write_csv(path, fieldnames, rows, manifest):
    buf = io.StringIO()
    buf.write("# manifest: " + json.dumps(manifest) + "\n")
    writer = csv.DictWriter(buf, fieldnames=fieldnames, extrasaction="ignore")
    writer.writeheader()
    writer.writerows(rows)
    if path is None:
        sys.stdout.write(buf.getvalue())
    else:
        Path(path).write_text(buf.getvalue())


def _write_json(path, payload):
    text = json.dumps(payload, indent=2)
    if path is None:
        print(text)
    else:
        Path(path).write_text(text + "\n")


def _fig_path(out):
    return None if out is None else str(Path(out).with_suffix(".png"))


def _pow2(v: int) -> bool:
    return v >= 1 and (v & (v - 1)) == 0


# --- subcommands ---------------------------------------------------------------

def cmd_fft_check(args) -> int:
    if not _pow2(args.max_n) or args.max_n < 2:
        raise ConfigError(f"--max-n must be a power of two >= 2, got {args.max_n}")
    rng = np.random.default_rng(args.seed)
    rows = []
    ok = True
    n = 2
    while n <= args.max_n:
        x = rng.normal(size=n) + 1j * rng.normal(size=n)
        err = np.linalg.norm(fft_array(x) - dft_naive(x)) / np.linalg.norm(dft_naive(x))
        passed = err < 1e-9
        ok &= passed
        rows.append({"suite": "fft_vs_dft", "n": n, "max_rel_err": f"{err:.3e}",
                     "status": "pass" if passed else "FAIL"})
        n *= 2
    n = 2
    while n <= min(args.max_n, 1024):  # dense oracle capped at the buffer-scale sizes
        m = random_butterfly(n, rng)
        dense = expand_dense(m)
        err = 0.0
        for _ in range(3):
            x = rng.normal(size=n)
            ref = dense @ x
            err = max(err, np.max(np.abs(apply_butterfly(m, x) - ref)) / max(np.max(np.abs(ref)), 1e-300))
        passed = err < 1e-9
        ok &= passed
        rows.append({"suite": "butterfly_vs_dense", "n": n, "max_rel_err": f"{err:.3e}",
                     "status": "pass" if passed else "FAIL"})
        n *= 2
    manifest = _manifest(args, "fft-check", {"max_n": args.max_n}, [args.out], seed=args.seed)
    _write_csv(args.out, ["suite", "n", "max_rel_err", "status"], rows, manifest)
    if not ok:
        print("fft-check: tolerance breach", file=sys.stderr)
        return 1
    return 0


def cmd_flops(args) -> int:
    cfg = load_model_config(args.model)
    if args.seq_len:
        cfg = replace(cfg, seq_len=args.seq_len)
    families = [normalize_family(f) for f in args.family] if args.family else list(FAMILIES)
    reference = count_flops_params(cfg, "transformer")
    rows = []
    for fam in families:
        rep = count_flops_params(cfg, fam)
        rows.append({
            "family": fam,
            "seq_len": cfg.seq_len,
            "flops": rep.flops,
            "params": rep.params,
            "flops_ratio_vs_transformer": f"{reference.flops / rep.flops:.4f}",
            "params_ratio_vs_transformer": f"{reference.params / rep.params:.4f}",
        })
    manifest = _manifest(args, "flops", {"model": args.model}, [args.out])
    _write_csv(args.out, list(rows[0].keys()), rows, manifest)
    if args.out and not args.no_plot:
        from .plotting import plot_flops
        plot_flops(rows, _fig_path(args.out))
    return 0


def _sim_args_to_configs(args):
    cfg = load_model_config(args.model)
    if args.seq_len:
        cfg = replace(cfg, seq_len=args.seq_len)
    hw = load_hw_config(args.hw)
    if getattr(args, "bandwidth", None):
        hw = replace(hw, bandwidth_bytes_per_s=args.bandwidth * 1e9)
    if hw.buffer_depth < required_buffer_depth(cfg):
        hw = replace(hw, buffer_depth=required_buffer_depth(cfg))
    return cfg, hw


def cmd_simulate(args) -> int:
    cfg, hw = _sim_args_to_configs(args)
    report = sim_network(cfg, hw, precision=args.precision)
    rows = report.to_rows()
    manifest = _manifest(
        args, "simulate",
        {"model": args.model, "hw": args.hw, "seq_len": cfg.seq_len,
         "bandwidth_gb_s": args.bandwidth, "precision": args.precision},
        [args.out],
    )
    fields = ["layer", "kind", "compute_cycles", "transfer_cycles", "exposed_cycles", "seconds"]
    if args.report == "json":
        _write_json(args.out, {"manifest": manifest, "layers": rows})
    else:
        _write_csv(args.out, fields, rows, manifest)
    if args.out and not args.no_plot:
        from .plotting import plot_latency_breakdown
        plot_latency_breakdown(rows, _fig_path(args.out))
    return 0


def cmd_bandwidth_sweep(args) -> int:
    cfg, hw = _sim_args_to_configs(args)
    bws = [float(b) * 1e9 for b in args.bandwidths.split(",")]
    sweep = bandwidth_sweep(cfg, hw, bws, precision=args.precision)
    rows = sweep.rows()
    sat = None if sweep.saturation_bandwidth is None else sweep.saturation_bandwidth / 1e9
    manifest = _manifest(
        args, "bandwidth-sweep",
        {"model": args.model, "hw": args.hw, "seq_len": cfg.seq_len},
        [args.out],
    )
    manifest["saturation_gb_s"] = sat
    manifest["roofline_seconds"] = sweep.roofline_seconds
    _write_csv(args.out, ["bandwidth_gb_s", "seconds"], rows, manifest)
    print(f"saturation bandwidth: {sat if sat is not None else 'not reached'} GB/s")
    if args.out and not args.no_plot:
        from .plotting import plot_bandwidth_sweep
        plot_bandwidth_sweep(rows, sweep.roofline_seconds, sat, _fig_path(args.out))
    return 0


def cmd_verify_layout(args) -> int:
    if not _pow2(args.max_n):
        raise ConfigError(f"--max-n must be a power of two, got {args.max_n}")
    banks = [int(b) for b in args.banks.split(",")]
    if args.scheme not in SCHEMES:
        raise ConfigError(f"--scheme must be one of {SCHEMES}")
    rows = []
    total = 0
    for b in banks:
        n = max(b, 2)
        while n <= args.max_n:
            rep = check_conflict_free(n, b, scheme=args.scheme)
            total += rep.total_conflicts
            rows.extend(
                {"N": n, "banks": b, "stage": s, "cycle": c, "conflicts": k}
                for s, c, k in rep.rows
            )
            n *= 2
    manifest = _manifest(args, "verify-layout",
                         {"max_n": args.max_n, "banks": args.banks, "scheme": args.scheme},
                         [args.out])
    _write_csv(args.out, ["N", "banks", "stage", "cycle", "conflicts"], rows, manifest)
    if args.scheme == "s2p" and total > 0:
        print(f"verify-layout: {total} conflicts under the s2p layout", file=sys.stderr)
        return 1
    return 0


def cmd_dse(args) -> int:
    space = SearchSpace.from_json(args.space)
    table = AccuracyTable.load(args.accuracy)
    budget = DeviceBudget.from_json(args.budget)
    key, _, value = args.constraint.partition("=")
    if key.strip() != "acc_loss" or not value:
        raise ConfigError(f"--constraint must look like acc_loss=0.01, got {args.constraint!r}")
    acc_loss = float(value)
    result = run_dse(space, table, budget, acc_loss=acc_loss)
    fields = ["config key", "d_hid", "r_ffn", "n_total", "n_abfly",
              "p_be", "p_bu", "p_qk", "p_sv", "accuracy", "latency_s", "multipliers", "bram"]
    rows = [
        {
            "config key": p.key_str,
            "d_hid": p.d_hid, "r_ffn": p.r_ffn, "n_total": p.n_total, "n_abfly": p.n_abfly,
            "p_be": p.p_be, "p_bu": p.p_bu, "p_qk": p.p_qk, "p_sv": p.p_sv,
            "accuracy": p.accuracy,
            "latency_s": f"{p.latency_seconds:.9f}",
            "multipliers": p.multipliers, "bram": p.bram,
        }
        for p in result.front
    ]
    manifest = _manifest(
        args, "dse",
        {"space": args.space, "accuracy": args.accuracy, "budget": args.budget,
         "constraint": args.constraint},
        [args.out],
    )
    manifest["enumerated_points"] = result.n_enumerated
    manifest["selected"] = result.selected.key_str if result.selected else "no-feasible-design"
    _write_csv(args.out, fields, rows, manifest)
    if result.selected is None:
        print("no feasible design")
    else:
        s = result.selected
        print(f"selected: {s.key_str} latency={s.latency_seconds:.6f}s accuracy={s.accuracy}")
    if args.out and not args.no_plot:
        from .plotting import plot_pareto
        plot_pareto(result.points, result.front, result.selected, _fig_path(args.out))
    return 0


def cmd_baseline_compare(args) -> int:
    cfg = load_model_config(args.model)
    if args.seq_len:
        cfg = replace(cfg, seq_len=args.seq_len)
    mults = args.multipliers
    bert = sim_baseline_mac(cfg, "transformer", mults)
    fab = sim_baseline_mac(cfg, "fabnet", mults)
    p_bu = 4
    p_be = 1 << max(0, (mults // (4 * p_bu)).bit_length() - 1)
    hw = HardwareConfig(p_be=p_be, p_bu=p_bu, buffer_depth=required_buffer_depth(cfg))
    accel = sim_network(cfg, hw, precision="fp16")
    rows = [
        {"design": "baseline-transformer", "cycles": bert.total_exposed, "seconds": bert.seconds},
        {"design": "baseline-fabnet", "cycles": fab.total_exposed, "seconds": fab.seconds},
        {"design": f"butterfly-accelerator (p_be={p_be}, p_bu={p_bu})",
         "cycles": accel.total_exposed, "seconds": accel.seconds},
        {"design": "speedup: fabnet vs transformer on baseline",
         "cycles": "", "seconds": f"{bert.seconds / fab.seconds:.3f}x"},
        {"design": "speedup: accelerator vs baseline on fabnet",
         "cycles": "", "seconds": f"{fab.seconds / accel.seconds:.3f}x"},
        {"design": "speedup: combined",
         "cycles": "", "seconds": f"{bert.seconds / accel.seconds:.3f}x"},
    ]
    manifest = _manifest(args, "baseline-compare",
                         {"model": args.model, "multipliers": mults, "seq_len": cfg.seq_len},
                         [args.out])
    _write_csv(args.out, ["design", "cycles", "seconds"], rows, manifest)
    return 0


# --- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bflylab",
        description="Butterfly/FFT accelerator lab: functional checks, cycle model, layout verifier, co-design search.",
    )
    p.add_argument("--version", action="version", version=f"bflylab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--out", help="report path (CSV/JSON); default stdout")
        sp.add_argument("--no-plot", action="store_true", help="skip the sibling .png figure")

    sp = sub.add_parser("fft-check", help="run FFT-vs-DFT and butterfly-vs-dense oracle suites")
    sp.add_argument("--max-n", type=int, default=4096)
    sp.add_argument("--seed", type=int, default=0)
    add_common(sp)
    sp.set_defaults(func=cmd_fft_check)

    sp = sub.add_parser("flops", help="FLOP/parameter counts and ratios vs the dense transformer")
    sp.add_argument("--model", required=True)
    sp.add_argument("--seq-len", type=int)
    sp.add_argument("--family", action="append", choices=["FABNet", "TransformerEncoder", "FNet",
                                                          "fabnet", "transformer", "fnet"])
    add_common(sp)
    sp.set_defaults(func=cmd_flops)

    sp = sub.add_parser("simulate", help="cycle-level latency report for one design point")
    sp.add_argument("--model", required=True)
    sp.add_argument("--hw", required=True)
    sp.add_argument("--seq-len", type=int)
    sp.add_argument("--bandwidth", type=float, help="override off-chip bandwidth, GB/s")
    sp.add_argument("--precision", choices=["fp16", "fp64"], default="fp16")
    sp.add_argument("--report", choices=["json", "csv"], default="csv")
    add_common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("bandwidth-sweep", help="latency vs off-chip bandwidth, with saturation point")
    sp.add_argument("--model", required=True)
    sp.add_argument("--hw", required=True)
    sp.add_argument("--seq-len", type=int)
    sp.add_argument("--bandwidths", default="6,12,25,50,100,200", help="GB/s list")
    sp.add_argument("--precision", choices=["fp16", "fp64"], default="fp16")
    add_common(sp)
    sp.set_defaults(func=cmd_bandwidth_sweep)

    sp = sub.add_parser("verify-layout", help="exhaustive bank-conflict check of the butterfly layout")
    sp.add_argument("--max-n", type=int, default=1024)
    sp.add_argument("--banks", default="2,4,8,16")
    sp.add_argument("--scheme", default="s2p", choices=list(SCHEMES))
    add_common(sp)
    sp.set_defaults(func=cmd_verify_layout)

    sp = sub.add_parser("dse", help="grid search, feasibility filter, Pareto front, selection")
    sp.add_argument("--space", required=True)
    sp.add_argument("--accuracy", required=True)
    sp.add_argument("--budget", required=True)
    sp.add_argument("--constraint", default="acc_loss=0.01")
    add_common(sp)
    sp.set_defaults(func=cmd_dse)

    sp = sub.add_parser("baseline-compare", help="speedups vs the MAC-array baseline design")
    sp.add_argument("--model", required=True)
    sp.add_argument("--seq-len", type=int)
    sp.add_argument("--multipliers", type=int, default=2048)
    add_common(sp)
    sp.set_defaults(func=cmd_baseline_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BflyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

import numpy as np
import pytest

from bflylab.errors import ConfigError, LayoutError
from bflylab.memlayout import (
    BankLayout,
    build_layout,
    build_stage_access,
    check_conflict_free,
    coalesce_indices,
    recover_order,
    start_positions,
)


def test_start_positions_base_case():
    assert start_positions(1) == [0]


def test_start_positions_four_and_eight():
    assert start_positions(4) == [0, -1, -1, -2]
    assert start_positions(8) == [0, -1, -1, -2, -1, -2, -2, -3]


def test_start_positions_popcount_identity():
    sp = start_positions(1 << 16)
    for i in range(1 << 16):
        assert sp[i] == -bin(i).count("1")


def test_start_positions_recursion():
    # doubling appends the previous block shifted one more position down
    for n in (2, 4, 8, 16, 64):
        sp = start_positions(2 * n)
        assert sp[n:] == [p - 1 for p in sp[:n]]


def test_build_layout_single_column_identity():
    layout = build_layout(4, 4)
    assert [layout.place(i) for i in range(4)] == [(0, 0), (1, 0), (2, 0), (3, 0)]


def test_build_layout_rotation_example():
    # column-major row of x5 is 1; the s2p layout shifts it by start_pos(1) = -1
    layout = build_layout(16, 4)
    assert layout.bank_of(0) == 0 and layout.place(0) == (0, 0)
    assert layout.bank_of(5) == (5 % 4 + start_positions(4)[1]) % 4 == 0


def test_layout_bijection():
    for n in (4, 16, 64, 256):
        for banks in (2, 4, 8, 16):
            if banks > n:
                continue
            for scheme in ("s2p", "column-major", "row-major"):
                assert build_layout(n, banks, scheme).is_bijection(), (n, banks, scheme)


def test_layout_rejects_bad_shapes():
    with pytest.raises(ConfigError):
        build_layout(12, 4)
    with pytest.raises(ConfigError):
        build_layout(4, 8)


def test_s2p_conflict_free_exhaustive():
    for banks in (2, 4, 8, 16):
        n = max(banks, 2)
        while n <= 1024:
            rep = check_conflict_free(n, banks, scheme="s2p")
            assert rep.conflict_free, (n, banks, rep.per_stage())
            n *= 2


def test_column_major_conflicts_at_first_stage():
    rep = check_conflict_free(16, 4, scheme="column-major")
    per_stage = rep.per_stage()
    assert per_stage[0] >= 1  # pairing x0 with x8 reads one bank twice


def test_row_major_conflicts_at_third_stage():
    rep = check_conflict_free(16, 4, scheme="row-major")
    per_stage = rep.per_stage()
    assert per_stage[2] >= 1  # pairing x0 with x2 reads one bank twice


def test_schedule_covers_every_element_once_per_stage():
    for n, banks in ((16, 4), (64, 8), (256, 2)):
        levels = n.bit_length() - 1
        for stage in range(levels):
            acc = build_stage_access(n, banks, stage)
            seen = [e for cyc in acc.cycles for pair in cyc for e in pair]
            assert sorted(seen) == list(range(n))
            for lo, hi in ((p for cyc in acc.cycles for p in cyc)):
                assert hi == lo + acc.stride and not (lo & acc.stride)


def test_read_sets_have_full_bank_fanout():
    layout = build_layout(64, 8)
    for stage in range(6):
        acc = build_stage_access(64, 8, stage)
        for reads in acc.read_sets(layout):
            assert len(reads) == 8  # distinct (bank, offset) per read port
            assert len({bank for bank, _ in reads}) == 8


def test_pairs_per_cycle_split():
    acc_full = build_stage_access(16, 4, 0)
    acc_one = build_stage_access(16, 4, 0, pairs_per_cycle=1)
    assert all(len(c) == 2 for c in acc_full.cycles)
    assert all(len(c) == 1 for c in acc_one.cycles)
    with pytest.raises(ConfigError):
        build_stage_access(16, 4, 0, pairs_per_cycle=4)


def test_coalesce_stage_one_column():
    col = [(11, 11.0), (1, 1.0), (9, 9.0), (3, 3.0)]
    c = coalesce_indices(col, stride=8)
    assert [(lo[0], hi[0]) for lo, hi in c.pairs] == [(1, 9), (3, 11)]


def test_coalesce_already_paired_is_identity():
    col = [(0, 0.0), (4, 4.0), (1, 1.0), (5, 5.0)]
    c = coalesce_indices(col, stride=4)
    flattened = [e for pair in c.pairs for e in pair]
    assert flattened == col


def test_coalesce_shift_metadata():
    col = [(11, 0.0), (1, 0.0), (9, 0.0), (3, 0.0)]
    c = coalesce_indices(col, stride=8, n_banks=4)
    assert c.shifts == (-1, 0, -1, 0)  # -popcount(index // 4)


def test_coalesce_rejects_unpairable():
    with pytest.raises(LayoutError):
        coalesce_indices([(0, 0.0), (1, 0.0)], stride=4)
    with pytest.raises(LayoutError):
        coalesce_indices([(0, 0.0), (4, 0.0), (2, 0.0)], stride=4)


def test_recover_single_pair():
    col = [(2, 5.0), (0, 7.0)]
    c = coalesce_indices(col, stride=2)
    assert recover_order(c.pairs, c) == col


def test_recover_rejects_tag_mismatch():
    c = coalesce_indices([(0, 0.0), (2, 0.0)], stride=2)
    with pytest.raises(LayoutError):
        recover_order((((1, 0.0), (3, 0.0)),), c)


def test_coalesce_matches_brute_force_matcher():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = 1 << int(rng.integers(2, 9))
        stage = int(rng.integers(0, n.bit_length() - 1))
        stride = n >> (stage + 1)
        lows = rng.permutation(np.arange(n)[(np.arange(n) & stride) == 0])[: rng.integers(1, 5)]
        members = np.concatenate([lows, lows + stride])
        rng.shuffle(members)
        col = [(int(i), float(i)) for i in members]
        c = coalesce_indices(col, stride=stride)
        brute = sorted((min(i, i ^ stride), max(i, i ^ stride)) for i, _ in col if not (i & stride))
        assert [(lo[0], hi[0]) for lo, hi in c.pairs] == brute


def test_coalesce_recover_round_trip_randomized():
    # 10^4 columns drawn from real stage schedules across sizes up to 1024
    rng = np.random.default_rng(1)
    done = 0
    while done < 10_000:
        n = 1 << int(rng.integers(2, 11))
        banks = 1 << int(rng.integers(1, 5))
        if banks > n:
            continue
        stage = int(rng.integers(0, n.bit_length() - 1))
        acc = build_stage_access(n, banks, stage)
        cyc = acc.cycles[rng.integers(0, len(acc.cycles))]
        members = [e for pair in cyc for e in pair]
        rng.shuffle(members)
        col = [(int(i), float(rng.normal())) for i in members]
        c = coalesce_indices(col, stride=acc.stride, n_banks=banks)
        assert recover_order(c.pairs, c) == col
        done += 1

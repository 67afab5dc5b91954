"""Discrete-event replays used to cross-validate the closed-form cycle models.

These walk the same double-buffer and streaming semantics event by event
instead of summing a formula, so a bookkeeping mistake in either side
shows up as a disagreement.
"""

from __future__ import annotations

from fractions import Fraction

from .accel import AttentionTiming

__all__ = ["replay_fft_layer", "replay_attention_stream"]


def replay_fft_layer(computes, loads, stores) -> int:
    """Event replay of the FFT overlap strategy (store-with-next-load).

    Two ping-pong banks swap synchronously: while bank A computes batch i,
    bank B stores batch i-1 and then loads batch i+1 on the shared port;
    the swap waits for both sides.
    """
    n = len(computes)
    assert len(loads) == n and len(stores) == n
    t = loads[0]
    for i in range(n):
        compute_done = t + computes[i]
        bus = 0
        if i > 0:
            bus += stores[i - 1]
        if i + 1 < n:
            bus += loads[i + 1]
        t = max(compute_done, t + bus)
    return t + stores[-1]


def replay_attention_stream(at: AttentionTiming) -> Fraction:
    """Row-granular replay of the BP -> QK -> SV stream, with backpressure.

    K and V are produced first, Q rows arrive at a uniform rate, the QK
    unit consumes them serially at t_qk/M per row, and the SV unit
    consumes QK output at t_sv/L per token, token l waiting for a
    ceil(l*M/L) fraction of the QK stream.  When the stage rates are
    balanced this lands exactly on the pipelined closed form; with
    backpressure it can only be slower, never faster.
    """
    m, l_rows = at.m_rows, at.l_rows
    q_rate = Fraction(at.t_q, m)
    qk_rate = Fraction(at.t_qk, m)
    sv_rate = Fraction(at.t_sv, l_rows)
    t_kv = Fraction(at.t_k + at.t_v)

    qk_done: list[Fraction] = []
    unit_free = Fraction(0)
    for j in range(1, m + 1):
        ready = t_kv + j * q_rate
        start = max(ready, unit_free)
        unit_free = start + qk_rate
        qk_done.append(unit_free)

    sv_free = Fraction(0)
    for l in range(1, l_rows + 1):
        dep = qk_done[-(-l * m // l_rows) - 1]
        start = max(dep, sv_free)
        sv_free = start + sv_rate
    return sv_free

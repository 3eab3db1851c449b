import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from salpsim.config import ConfigError, Geometry, Mode, TimingParams
from salpsim.dram import (Command, CommandKind as K, Constraint, DramState,
                          IllegalCommandError, Scope, SimulationIntegrityError,
                          SubarrayStatus, build_timing_table)
from salpsim.verify import verify_stream

from streams import candidates, legal_stream

T = TimingParams()
G = Geometry()


def cmd(kind, sa=0, row=-1, cycle=0, bank=0, col=0):
    return Command(kind, 0, 0, bank, sa, row, col, cycle)


# -- constraint table ---------------------------------------------------------

def test_table_baseline_has_bankwide_tRP():
    assert Constraint(K.PRE, K.ACT, Scope.SAME_BANK, 11) in build_timing_table(T, Mode.BASELINE)


def test_table_salp1_narrows_tRP():
    tab = build_timing_table(T, Mode.SALP1)
    assert Constraint(K.PRE, K.ACT, Scope.SAME_SUBARRAY, 11) in tab
    assert Constraint(K.PRE, K.ACT, Scope.OTHER_SUBARRAY, 0) in tab
    assert not any(c.prev == K.PRE and c.next == K.ACT and c.scope == Scope.SAME_BANK for c in tab)


def test_table_masa_sa_sel():
    tab = build_timing_table(T, Mode.MASA)
    assert Constraint(K.SA_SEL, K.RD, Scope.SAME_BANK, 1) in tab
    assert Constraint(K.ACT, K.SA_SEL, Scope.SAME_SUBARRAY, 11) in tab
    assert not any(c.prev == K.SA_SEL for c in build_timing_table(T, Mode.SALP2))


def test_table_baseline_values():
    tab = build_timing_table(T, Mode.BASELINE)
    for c in [(K.ACT, K.RD, Scope.SAME_BANK, 11), (K.ACT, K.PRE, Scope.SAME_BANK, 28),
              (K.ACT, K.ACT, Scope.SAME_BANK, 39), (K.RD, K.PRE, Scope.SAME_BANK, 6),
              (K.WR, K.PRE, Scope.SAME_BANK, 24), (K.ACT, K.ACT, Scope.SAME_RANK, 5),
              (K.WR, K.RD, Scope.SAME_RANK, 18), (K.RD, K.RD, Scope.SAME_CHANNEL, 4),
              (K.RD, K.WR, Scope.SAME_CHANNEL, 9)]:
        assert Constraint(*c) in tab


def test_table_rejects_bad_params():
    with pytest.raises(ConfigError):
        build_timing_table("x", Mode.BASELINE)


# -- earliest issue -----------------------------------------------------------

def test_baseline_pre_and_next_act():
    d = DramState(G, T, Mode.BASELINE)
    d.issue(cmd(K.ACT, 0, 5, 0))
    d.issue(cmd(K.RD, 0, 5, 11))
    assert d.earliest_issue_cycle(cmd(K.PRE_ALL, -1)) == 28
    d.issue(cmd(K.PRE_ALL, -1, cycle=28))
    assert d.earliest_issue_cycle(cmd(K.ACT, 1, 9)) == 39


def test_salp1_act_right_after_pre():
    d = DramState(G, T, Mode.SALP1)
    d.issue(cmd(K.ACT, 0, 5, 0))
    d.issue(cmd(K.RD, 0, 5, 11))
    assert d.earliest_issue_cycle(cmd(K.PRE, 0)) == 28
    d.issue(cmd(K.PRE, 0, cycle=28))
    assert d.earliest_issue_cycle(cmd(K.ACT, 1, 9)) == 29
    # the same subarray still waits tRP
    assert d.earliest_issue_cycle(cmd(K.ACT, 0, 9)) == 39


def test_masa_sa_sel_then_read():
    d = DramState(G, T, Mode.MASA)
    d.issue(cmd(K.ACT, 0, 5, 0))
    assert d.earliest_issue_cycle(cmd(K.ACT, 1, 9)) == 5
    d.issue(cmd(K.ACT, 1, 9, 5))
    d.issue(cmd(K.RD, 0, 5, 11))
    assert d.earliest_issue_cycle(cmd(K.RD, 1, 9)) is None  # not designated
    assert d.earliest_issue_cycle(cmd(K.SA_SEL, 1)) == 16
    d.issue(cmd(K.SA_SEL, 1, cycle=16))
    assert d.earliest_issue_cycle(cmd(K.RD, 1, 9)) == 17


def test_salp2_write_recovery_overlap():
    d = DramState(G, T, Mode.SALP2)
    d.issue(cmd(K.ACT, 0, 5, 0))
    d.issue(cmd(K.WR, 0, 5, 11))
    assert d.bank().subarrays[0].write_recovery_end == 35
    assert d.earliest_issue_cycle(cmd(K.ACT, 1, 9)) <= 12
    d.issue(cmd(K.ACT, 1, 9, 12))
    assert d.earliest_issue_cycle(cmd(K.PRE, 0)) == 35
    assert d.earliest_issue_cycle(cmd(K.RD, 1, 9)) is None  # two open
    d.issue(cmd(K.PRE, 0, cycle=35))
    assert d.earliest_issue_cycle(cmd(K.RD, 1, 9)) == 36
    # the cap is two
    assert d.earliest_issue_cycle(cmd(K.ACT, 2, 1)) is not None
    d.issue(cmd(K.ACT, 2, 1, 36))
    assert d.earliest_issue_cycle(cmd(K.ACT, 3, 1)) is None


@pytest.mark.parametrize("mode,cap", [(Mode.BASELINE, 1), (Mode.SALP1, 1), (Mode.SALP2, 2),
                                      (Mode.MASA, 8)])
def test_activation_caps(mode, cap):
    d = DramState(G, T, mode)
    c = 0
    for s in range(8):
        e = d.earliest_issue_cycle(cmd(K.ACT, s, 1), c)
        if s < cap:
            assert e is not None
            d.issue(cmd(K.ACT, s, 1, e))
            c = e
        else:
            assert e is None
    assert d.bank().activated_count == cap


def test_never_vs_not_yet():
    d = DramState(G, T, Mode.BASELINE)
    assert d.earliest_issue_cycle(cmd(K.RD, 0, 1)) is None
    assert d.earliest_issue_cycle(cmd(K.PRE, 0)) is None
    assert d.earliest_issue_cycle(cmd(K.PRE_ALL, -1)) is None
    with pytest.raises(IllegalCommandError):
        d.earliest_issue_cycle(cmd(K.SA_SEL, 0))
    with pytest.raises(IllegalCommandError):
        d.earliest_issue_cycle(cmd(K.ACT, 8, 1))
    with pytest.raises(IllegalCommandError):
        d.earliest_issue_cycle(cmd(K.ACT, 0, 512))


def test_issue_rejects_early_and_illegal():
    d = DramState(G, T, Mode.BASELINE)
    d.issue(cmd(K.ACT, 0, 5, 0))
    with pytest.raises(SimulationIntegrityError):
        d.issue(cmd(K.RD, 0, 5, 10))
    with pytest.raises(SimulationIntegrityError):
        d.issue(cmd(K.RD, 0, 6, 20))
    with pytest.raises(SimulationIntegrityError):
        d.issue(cmd(K.ACT, 1, 5, 50))


def test_one_command_per_cycle():
    d = DramState(G, T, Mode.BASELINE)
    d.issue(cmd(K.ACT, 0, 5, 0))
    assert d.earliest_issue_cycle(cmd(K.ACT, 0, 1, bank=1)) == 5
    g2 = Geometry(channels=2)
    d = DramState(g2, T, Mode.BASELINE)
    d.issue(Command(K.ACT, 0, 0, 0, 0, 1, -1, 3))
    assert d.earliest_issue_cycle(Command(K.ACT, 1, 0, 0, 0, 1, -1)) == 0


def test_tfaw_limits_fifth_activation():
    d = DramState(G, T, Mode.BASELINE)
    c = 0
    for b in range(4):
        c = d.earliest_issue_cycle(cmd(K.ACT, 0, 1, bank=b), c)
        d.issue(cmd(K.ACT, 0, 1, c, bank=b))
    assert c == 15
    assert d.earliest_issue_cycle(cmd(K.ACT, 0, 1, bank=4)) == 24


def test_data_bus_interval_blocks_overlap():
    d = DramState(G, T, Mode.BASELINE)
    d.issue(cmd(K.ACT, 0, 1, 0))
    d.issue(cmd(K.ACT, 0, 1, 5, bank=1))
    d.issue(cmd(K.RD, 0, 1, 16, bank=1))  # data [27, 31)
    # a write at c puts data at c+8; tRTW gives 25, data [33, 37) is free
    assert d.earliest_issue_cycle(cmd(K.WR, 0, 1)) == 25


def test_state_transitions_masa():
    d = DramState(G, T, Mode.MASA)
    d.issue(cmd(K.ACT, 3, 7, 0))
    b = d.bank(cycle=0)
    assert b.subarrays[3].status is SubarrayStatus.ACTIVATING
    assert b.subarrays[3].open_local_row == 7
    assert b.designated == 3
    assert d.bank(cycle=11).subarrays[3].status is SubarrayStatus.ACTIVATED
    d.issue(cmd(K.ACT, 1, 2, 5))
    assert d.bank().designated == 3  # no re-designation on 1 -> 2
    d.issue(cmd(K.SA_SEL, 1, cycle=16))
    b = d.bank()
    assert b.designated == 1 and b.activated_count == 2
    d.issue(cmd(K.PRE, 1, cycle=33))
    b = d.bank(cycle=33)
    assert b.designated is None
    assert b.subarrays[1].status is SubarrayStatus.PRECHARGING
    assert d.bank(cycle=44).subarrays[1].status is SubarrayStatus.PRECHARGED


def test_copy_is_independent():
    d = DramState(G, T, Mode.SALP1)
    d.issue(cmd(K.ACT, 0, 1, 0))
    e = d.copy()
    e.issue(cmd(K.RD, 0, 1, 11))
    assert len(d.history) == 1 and len(e.history) == 2
    assert d.earliest_issue_cycle(cmd(K.PRE, 0)) == 28


# -- properties -----------------------------------------------------------------

small_geoms = st.builds(Geometry, channels=st.integers(1, 2), ranks_per_channel=st.integers(1, 2),
                        banks_per_rank=st.integers(1, 3), subarrays_per_bank=st.sampled_from([1, 2, 4]),
                        rows_per_subarray=st.just(4), columns_per_row=st.just(4))
timings = st.sampled_from([T, TimingParams(tPA=2), TimingParams(act_window_same_bank=False),
                           TimingParams(tRCD=3, tRAS=5, tRP=2, tRRD=1, tFAW=6, tCL=3, tCWL=2,
                                        tBL=2, tWR=2, tRTP=1, tCCD=2, tRTW=3, tWTR=1)])
modes = st.sampled_from(list(Mode))


@given(small_geoms, timings, modes, st.integers(0, 10 ** 6))
def test_generated_streams_pass_verifier(g, t, mode, seed):
    d = DramState(g, t, mode)
    stream = legal_stream(d, seed, 60)
    assert verify_stream(stream, g, t, mode) == []


@given(small_geoms, timings, st.integers(0, 10 ** 6))
def test_monotone_relaxation(g, t, seed):
    base = legal_stream(DramState(g, t, Mode.BASELINE), seed, 50)
    for relaxed in (Mode.SALP1, Mode.SALP2):
        d = DramState(g, t, relaxed)
        for c in base:
            d.issue(c)
    s1 = legal_stream(DramState(g, t, Mode.SALP1), seed, 50)
    d = DramState(g, t, Mode.SALP2)
    for c in s1:
        d.issue(c)


@given(timings, modes, st.integers(0, 10 ** 6))
def test_degeneracy_single_subarray(t, mode, seed):
    g = Geometry(banks_per_rank=2, subarrays_per_bank=1, rows_per_subarray=4, columns_per_row=4)
    stream = [c for c in legal_stream(DramState(g, t, mode), seed, 50) if c.kind != K.SA_SEL]
    for other in Mode:
        d = DramState(g, t, other)
        for c in stream:
            d.issue(c)
        assert verify_stream(stream, g, t, other) == []


@given(small_geoms, st.integers(0, 10 ** 6))
def test_earliest_non_increasing_baseline_to_salp1(g, seed):
    stream = legal_stream(DramState(g, T, Mode.BASELINE), seed, 40)
    b, s = DramState(g, T, Mode.BASELINE), DramState(g, T, Mode.SALP1)
    rng = random.Random(seed)
    for c in stream:
        for q in candidates(b, rng):
            eb = b.earliest_issue_cycle(q)
            if eb is not None:
                es = s.earliest_issue_cycle(q)
                assert es is not None and es <= eb
        b.issue(c)
        s.issue(c)


@given(small_geoms, modes, st.integers(0, 10 ** 6))
def test_replay_deterministic(g, mode, seed):
    stream = legal_stream(DramState(g, T, mode), seed, 40)
    a, b = DramState(g, T, mode), DramState(g, T, mode)
    for c in stream:
        a.issue(c)
        b.issue(c)
    for name in ("sa", "bk", "rk", "ch", "ctr"):
        assert np.array_equal(getattr(a, name), getattr(b, name))

import io
import random

import pytest
from hypothesis import given, strategies as st

from salpsim.config import Geometry, Mode, SimConfig, TimingParams
from salpsim.dram import Command, CommandKind as K, DramState
from salpsim.engine import run
from salpsim.trace import conflict_trace, fig23_trace
from salpsim.verify import (Violation, read_command_log, rule_name, verify_stream,
                            write_command_log)

from mutate import apply_mutation, mutation_sites
from streams import candidates, legal_stream

T = TimingParams()
G = Geometry()


def c(kind, cycle, sa=0, row=-1, bank=0, ch=0):
    return Command(kind, ch, 0, bank, sa, row, 0 if kind in (K.RD, K.WR) else -1, cycle)


def rules(v):
    return sorted(x.rule for x in v)


def test_empty_stream():
    assert verify_stream([], G, T, Mode.BASELINE) == []


def test_act_then_early_read():
    v = verify_stream([c(K.ACT, 0, row=1), c(K.RD, 5, row=1)], G, T, Mode.BASELINE)
    assert len(v) == 1
    assert v[0].rule == "tRCD" and v[0].first.kind == K.ACT and v[0].second.kind == K.RD
    assert "tRCD" in str(v[0])


def test_same_cycle_same_channel():
    v = verify_stream([c(K.ACT, 0, row=1), c(K.ACT, 0, row=1, bank=1)], G, T, Mode.BASELINE)
    assert "command-bus" in rules(v)
    g2 = Geometry(channels=2)
    assert verify_stream([c(K.ACT, 0, row=1), c(K.ACT, 0, row=1, ch=1)], g2, T, Mode.BASELINE) == []


def test_out_of_order():
    v = verify_stream([c(K.ACT, 5, row=1), c(K.ACT, 0, row=1, bank=1)], G, T, Mode.BASELINE)
    assert "order" in rules(v)


def test_state_rules():
    assert rules(verify_stream([c(K.RD, 0, row=1)], G, T, "baseline")) == ["column-closed"]
    assert rules(verify_stream([c(K.PRE, 0)], G, T, "salp1")) == ["precharge-closed"]
    assert rules(verify_stream([c(K.ACT, 0, row=1), c(K.RD, 20, row=2)], G, T, "salp1")) == [
        "column-row-mismatch"]
    assert rules(verify_stream([c(K.ACT, 0, row=1), c(K.SA_SEL, 20)], G, T, "salp2")) == [
        "sa-sel-mode"]
    v = verify_stream([c(K.ACT, 0, row=1), c(K.ACT, 50, row=1)], G, T, "masa")
    assert rules(v) == ["act-open-subarray"]
    v = verify_stream([c(K.ACT, 0, row=1), c(K.ACT, 10, sa=1, row=1)], G, T, "salp1")
    assert rules(v) == ["activation-cap"]


def test_single_driver_salp2():
    s = [c(K.ACT, 0, row=1), c(K.ACT, 12, sa=1, row=2), c(K.RD, 30, sa=1, row=2)]
    assert rules(verify_stream(s, G, T, "salp2")) == ["single-driver"]
    s = [c(K.ACT, 0, row=1), c(K.ACT, 12, sa=1, row=2), c(K.PRE, 28), c(K.RD, 30, sa=1, row=2)]
    assert verify_stream(s, G, T, "salp2") == []


def test_designation_masa():
    s = [c(K.ACT, 0, row=1), c(K.ACT, 5, sa=1, row=2), c(K.RD, 20, sa=1, row=2)]
    assert rules(verify_stream(s, G, T, "masa")) == ["designation"]
    s = [c(K.ACT, 0, row=1), c(K.ACT, 5, sa=1, row=2), c(K.SA_SEL, 16, sa=1), c(K.RD, 17, sa=1, row=2)]
    assert verify_stream(s, G, T, "masa") == []
    s[3] = c(K.RD, 16 + 0, sa=1, row=2)
    assert "command-bus" in rules(verify_stream(s, G, T, "masa"))


def test_tfaw_and_bus():
    s = [c(K.ACT, 5 * b, row=1, bank=b) for b in range(5)]
    assert rules(verify_stream(s, G, T, "baseline")) == ["tFAW"]
    s = [c(K.ACT, 0, row=1), c(K.ACT, 5, row=1, bank=1), c(K.RD, 16, row=1),
         c(K.WR, 20, row=1, bank=1)]
    v = verify_stream(s, G, T, "baseline")
    assert "tRTW" in rules(v)


def test_pre_all_scopes_open_subarrays():
    s = [c(K.ACT, 0, sa=2, row=1), Command(K.PRE_ALL, 0, 0, 0, -1, -1, -1, 28),
         c(K.ACT, 29, sa=0, row=1), c(K.ACT, 35, sa=2, row=1, bank=1)]
    assert verify_stream(s, G, T, "salp1") == []
    s[2] = c(K.ACT, 29, sa=2, row=1)
    assert rules(verify_stream(s, G, T, "salp1")) == ["tRC", "tRP"]


def test_rule_names_cover_table():
    from salpsim.dram import build_timing_table
    from salpsim.verify import _rule_names
    names = set(_rule_names(build_timing_table(T, Mode.MASA)).values())
    assert names >= {"tRCD", "tRAS", "tRP", "tRC", "tRRD", "tRTP", "tWR", "tWTR", "tCCD",
                     "tRTW", "tSCD", "tPA"}


def test_command_log_roundtrip():
    r = run(SimConfig(mode="masa"), [fig23_trace(G)])
    buf = io.StringIO()
    write_command_log(r.command_list(), buf)
    assert buf.getvalue().startswith("cycle,kind,channel,rank,bank,subarray,row,column\n")
    buf.seek(0)
    assert read_command_log(buf) == r.command_list()


@pytest.mark.parametrize("text", ["a,b\n", "cycle,kind,channel,rank,bank,subarray,row,column\n1,FOO,0,0,0,0,0,0\n",
                                  "cycle,kind,channel,rank,bank,subarray,row,column\n1,ACT,0\n"])
def test_command_log_errors(text):
    with pytest.raises(ValueError):
        read_command_log(io.StringIO(text))


@pytest.mark.parametrize("mode", list(Mode))
def test_simulated_streams_clean(mode):
    cfg = SimConfig(mode=mode)
    r = run(cfg, [conflict_trace(G, 3000, 0.3)])
    assert verify_stream(r.command_list(), G, T, mode) == []


geoms = st.builds(Geometry, channels=st.integers(1, 2), banks_per_rank=st.integers(1, 3),
                  subarrays_per_bank=st.sampled_from([1, 2, 4]), rows_per_subarray=st.just(4),
                  columns_per_row=st.just(4))


@given(geoms, st.sampled_from(list(Mode)), st.integers(0, 10 ** 6))
def test_agreement_with_dram_model(g, mode, seed):
    """earliest_issue_cycle <= cycle exactly when the verifier accepts."""
    d = DramState(g, T, mode)
    rng = random.Random(seed)
    stream = legal_stream(DramState(g, T, mode), seed, 30)
    for nxt in stream:
        now = d.history[-1].cycle if d.history else 0
        for q in candidates(d, rng):
            at = now + rng.randrange(0, 30)
            e = d.earliest_issue_cycle(q)
            kernel_ok = e is not None and e <= at
            oracle_ok = not verify_stream(d.history + [q.at(at)], g, T, mode)
            assert kernel_ok == oracle_ok, (q.at(at), e)
        d.issue(nxt)


@given(st.sampled_from(list(Mode)), st.integers(0, 10 ** 6))
def test_mutations_detected(mode, seed):
    g = Geometry(banks_per_rank=2, subarrays_per_bank=4, rows_per_subarray=4, columns_per_row=4)
    stream = legal_stream(DramState(g, T, mode), seed, 40)
    sites = mutation_sites(stream, g, T, mode)
    rng = random.Random(seed)
    for j, new, rule in rng.sample(sites, min(10, len(sites))):
        v = verify_stream(apply_mutation(stream, j, new), g, T, mode)
        assert rule in {x.rule for x in v}, (stream[j], new, rule)

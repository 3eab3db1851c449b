import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from salpsim.config import Geometry, MappingPolicy
from salpsim.mapping import map_addresses
from salpsim.trace import (SynthParams, TraceEntry, TraceError, bank_weights, conflict_trace,
                           fig23_trace, load_trace, parse_trace, render_trace,
                           row_hit_opportunity, save_trace, scenario_trace, synth_header,
                           synth_trace, thrash_trace, trace_arrays)

G = Geometry()


def test_parse_examples():
    assert parse_trace("5 R 0x1FC0") == [TraceEntry(5, False, 0x1FC0)]
    assert parse_trace("0 W 64") == [TraceEntry(0, True, 0x40)]
    assert parse_trace("# header\n\n  3 r 0x10  \n") == [TraceEntry(3, False, 16)]


@pytest.mark.parametrize("text,line", [("R 5", 1), ("1 R 0\nx R 0", 2), ("1 Q 0", 1),
                                       ("1 R zz", 1), ("-1 R 0", 1), ("1 R 0 9", 1)])
def test_parse_errors(text, line):
    with pytest.raises(TraceError) as exc:
        parse_trace(text)
    assert exc.value.line == line
    assert f"line {line}" in str(exc.value)


def test_capacity_check(tmp_path):
    with pytest.raises(TraceError):
        parse_trace(f"0 R {G.capacity}", capacity=G.capacity)
    p = tmp_path / "t.trc"
    p.write_text("0 R 0\n0 R 0xffffffffff\n")
    with pytest.raises(TraceError) as exc:
        load_trace(p, G.capacity)
    assert "line 2" in str(exc.value)


entries = st.lists(st.builds(TraceEntry, st.integers(0, 10 ** 6), st.booleans(),
                             st.integers(0, 2 ** 40)), max_size=50)


@given(entries)
def test_render_parse_roundtrip(es):
    assert parse_trace(render_trace(es, ["a header"])) == es


def test_save_load(tmp_path):
    es = synth_trace(SynthParams(n_requests=200, seed=3), G)
    p = tmp_path / "x.trc"
    save_trace(p, es, synth_header(SynthParams(n_requests=200, seed=3), G, MappingPolicy.ROW_INTERLEAVED))
    assert load_trace(p, G.capacity) == es
    assert p.read_text().startswith("# synth n_requests=200")


def test_synth_deterministic():
    p = SynthParams(n_requests=500, read_fraction=0.7, row_hit_prob=0.3, bank_skew=2.0, seed=1)
    assert render_trace(synth_trace(p, G)) == render_trace(synth_trace(p, G))
    assert synth_trace(p, G) != synth_trace(SynthParams(**{**p.__dict__, "seed": 2}), G)


def test_read_fraction_converges():
    for rf in (0.0, 0.3, 0.75, 1.0):
        es = synth_trace(SynthParams(n_requests=10_000, read_fraction=rf, seed=5), G)
        reads = sum(not e.is_write for e in es) / len(es)
        assert abs(reads - rf) <= 0.02


@pytest.mark.parametrize("p", [0.0, 0.2, 0.5, 0.9])
@pytest.mark.parametrize("spread", [True, False])
def test_row_hit_opportunity_converges(p, spread):
    es = synth_trace(SynthParams(n_requests=10_000, row_hit_prob=p, subarray_spread=spread,
                                 bank_skew=3.0, seed=11), G)
    assert abs(row_hit_opportunity(es, G) - p) <= 0.03


def test_all_one_row():
    es = synth_trace(SynthParams(n_requests=100, row_hit_prob=1.0, seed=4), G)
    m = map_addresses(trace_arrays(es)[2], G)
    keys = set(zip(m["bank"], m["subarray"], m["local_row"]))
    assert len(keys) == 1


def test_infinite_skew_conflicts():
    es = synth_trace(SynthParams(n_requests=2000, bank_skew=math.inf, subarray_spread=True, seed=2), G)
    m = map_addresses(trace_arrays(es)[2], G)
    assert set(m["bank"]) == {0} and set(m["channel"]) == {0} and set(m["rank"]) == {0}
    assert np.all(m["subarray"][1:] != m["subarray"][:-1])


def test_spread_off_keeps_subarray():
    es = synth_trace(SynthParams(n_requests=2000, bank_skew=math.inf, subarray_spread=False, seed=2), G)
    m = map_addresses(trace_arrays(es)[2], G)
    assert len(set(m["subarray"])) == 1
    assert np.all(m["local_row"][1:] != m["local_row"][:-1])


def test_bank_weights():
    assert np.allclose(bank_weights(4, 1.0), 0.25)
    w = bank_weights(8, 12.0)
    assert w[0] > 0.99 and np.isclose(w.sum(), 1.0)
    assert list(bank_weights(3, math.inf)) == [1.0, 0.0, 0.0]


@pytest.mark.parametrize("kw", [{"n_requests": 0}, {"read_fraction": 1.5}, {"row_hit_prob": -0.1},
                                {"bank_skew": 0.5}, {"mean_inst_gap": -1}])
def test_synth_params_validation(kw):
    with pytest.raises(ValueError):
        SynthParams(**kw)


def test_scenarios():
    f = fig23_trace(G)
    m = map_addresses(trace_arrays(f)[2], G)
    assert [e.is_write for e in f] == [False, True, False, False]
    assert list(m["subarray"]) == [0, 1, 0, 1] and set(m["bank"]) == {0}
    assert list(m["local_row"]) == [5, 9, 5, 9]
    t = thrash_trace(G, 10)
    m = map_addresses(trace_arrays(t)[2], G)
    assert list(m["subarray"]) == [0, 1] * 5
    assert len(conflict_trace(G, 100)) == 100
    assert scenario_trace("thrash", G, n_requests=6) == thrash_trace(G, 6)
    with pytest.raises(ValueError):
        scenario_trace("nope", G)
    with pytest.raises(ValueError):
        fig23_trace(G.with_subarrays(1))

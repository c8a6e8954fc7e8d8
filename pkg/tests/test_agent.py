import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import K2M3, K2M3_MULTI, point_env
from mumab.agent import Agent, Phase, ProtocolParams, offset_channel
from mumab.env import ChannelModel
from mumab.harness import RunConfig, lockstep, run_episode
from mumab.matching import MeanMatrix, QuantizedMatrix, optimal_set_from_quantized


def idle(params, agent_id=None, seed=0):
    a = Agent(params, random.Random(seed), program=iter(()))
    a.id = agent_id
    return a


def drive(agents, phase, values):
    for a in agents:
        a.start(getattr(a, phase)())
    return lockstep(agents, point_env(values))


def params(k, m, **kw):
    kw.setdefault("delta", 0.1)
    return ProtocolParams.from_delta(k, m, **kw)


def test_param_defaults():
    p = params(10, 10)
    assert p.t_fix == 53
    assert p.gamma == 50
    assert p.rounds == 1
    assert ProtocolParams.from_delta(2, 3, 1 / 12).rounds == 3
    with pytest.raises(ValueError):
        ProtocolParams(3, 2, 0.1, 1, 1, 1)
    with pytest.raises(ValueError):
        ProtocolParams(2, 3, 0.1, 1, 1, 1, tiebreak_mode="coin")


def test_offset_examples():
    assert offset_channel(3, 0, 5) == 3
    assert offset_channel(3, 4, 5) == 2
    assert [s for s in range(10) if offset_channel(2, s, 10) == 7] == [5]


@given(st.integers(2, 12), st.data())
def test_offset_scans_never_meet(m, data):
    d1, d2 = data.draw(st.lists(st.integers(1, m), min_size=2, max_size=2, unique=True))
    assert all(offset_channel(d1, s, m) != offset_channel(d2, s, m) for s in range(m))
    assert sorted(offset_channel(d1, s, m) for s in range(m)) == list(range(1, m + 1))


def test_fixing_locks_on_first_clean_pull():
    p = params(1, 4, t_fix=6)
    a = idle(p)
    a.start(a.fixing())
    first = a.act()
    a.observe(0.0)
    assert a.id is None
    second = a.act()
    a.observe(0.5)
    assert a.id == second
    for _ in range(4):
        assert a.act() == second
        a.observe(0.5)
    assert a.done and 1 <= first <= 4


def test_verify_examples():
    values = [[0.5] * 8 for _ in range(3)]
    p = params(3, 8)
    agents = [idle(p, i) for i in (2, 5, 7)]
    hist = drive(agents, "verify", values)
    assert len(hist) == 8
    assert all(out.collisions == 0 for _, out in hist)
    assert [a.result for a in agents] == [True, True, True]

    agents = [idle(p, 2), idle(p, 5), idle(p, None)]
    drive(agents, "verify", values)
    assert [a.result for a in agents] == [False, False, False]
    assert all(a.id is None for a in agents)

    solo = [idle(params(1, 3), 2)]
    drive(solo, "verify", [[0.5] * 3])
    assert solo[0].result is True


def test_explore_collision_free_and_counts():
    p = params(3, 5, gamma=4)
    values = [[0.1, 0.2, 0.3, 0.4, 0.5], [0.5, 0.4, 0.3, 0.2, 0.1], [0.6] * 5]
    agents = [idle(p, i) for i in (1, 3, 4)]
    hist = drive(agents, "explore", values)
    assert len(hist) == 5 * 4
    assert all(out.collisions == 0 for _, out in hist)
    assert [acts[1] for acts, _ in hist[:4]] == [3] * 4
    assert hist[16][0][1] == 2
    for a, row in zip(agents, values):
        assert a.counts[1:] == [4] * 5
        assert a.estimates == pytest.approx(row)


def comm_agents(p, ids, values):
    agents = [idle(p, i) for i in ids]
    for a, row in zip(agents, values):
        a.sums = [0.0] + list(row)
        a.counts = [0] + [1] * p.m
    return agents


@pytest.mark.parametrize("ids", [(1, 3), (2, 3), (3, 1)])
def test_match_comm_shares_identical_digits(ids):
    p = params(2, 3, delta=1 / 12)
    agents = comm_agents(p, ids, K2M3)
    hist = drive(agents, "match_comm", K2M3)
    present = sorted(ids)
    assert len(hist) == 3 * 3 + len(present) * 3 * p.rounds * 3
    q = agents[0].quantized
    assert all(a.quantized == q for a in agents)
    rows = [K2M3[ids.index(s)] for s in present]
    assert q == QuantizedMatrix.from_values(rows, 3, p.rounds)
    assert all(not a.records for a in agents)
    assert not [e for a in agents for e in a.events if e[1] == "fault"]
    for a, i in zip(agents, ids):
        assert a.slots == tuple(present)
        assert a.row == present.index(i) + 1


def test_scanners_only_collide_with_owner():
    p = params(3, 4, delta=0.05)
    values = [[0.2, 0.4, 0.6, 0.8], [0.3, 0.5, 0.7, 0.9], [0.1, 0.1, 0.9, 0.5]]
    agents = comm_agents(p, (4, 1, 2), values)
    for acts, out in drive(agents, "match_comm", values):
        assert out.collisions in (0, 2)


def test_tiebreak_walkthrough():
    p = params(2, 3, delta=0.1)
    q = QuantizedMatrix.from_values(K2M3_MULTI, 3, p.rounds)
    assert optimal_set_from_quantized(q) == ((1, 3), (2, 3))
    agents = [idle(p, i) for i in (1, 3)]
    for row, a in enumerate(agents, 1):
        a.quantized, a.row, a.slots = q, row, (1, 3)
    hist = drive(agents, "tiebreak", K2M3_MULTI)
    # slot 1 pins, then the set is a singleton and slot 2 is skipped
    assert len(hist) == 3
    assert all(a.final == (1, 3) and a.candidates == [(1, 3)] for a in agents)

    det = [idle(params(2, 3, delta=0.1, tiebreak_mode="deterministic"), i) for i in (1, 3)]
    for row, a in enumerate(det, 1):
        a.quantized, a.row, a.slots = q, row, (1, 3)
    assert drive(det, "tiebreak", K2M3_MULTI) == []
    assert all(a.final == (1, 3) for a in det)


def test_tiebreak_skipped_for_singleton():
    p = params(2, 3, delta=1 / 12)
    q = QuantizedMatrix.from_values(K2M3, 3, p.rounds)
    agents = [idle(p, i) for i in (2, 3)]
    for row, a in enumerate(agents, 1):
        a.quantized, a.row, a.slots = q, row, (2, 3)
    assert drive(agents, "tiebreak", K2M3) == []
    assert all(a.final == (1, 2) for a in agents)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2), st.data())
def test_tiebreak_modes_agree(k, extra, data):
    m = k + extra
    if m < 2:
        m = 2
    digits = data.draw(st.lists(st.integers(1, m), min_size=k * m, max_size=k * m))
    q = QuantizedMatrix(m, 1, tuple(tuple((digits[j * m + c],) for c in range(m)) for j in range(k)))
    finals = {}
    for mode in ("protocol", "deterministic"):
        p = ProtocolParams(k, m, 0.1, 1, 1, 1, tiebreak_mode=mode)
        agents = [idle(p, i) for i in range(1, k + 1)]
        for row, a in enumerate(agents, 1):
            a.quantized, a.row, a.slots = q, row, tuple(range(1, k + 1))
        drive(agents, "tiebreak", [[0.5] * m for _ in range(k)])
        assert len({a.final for a in agents}) == 1
        finals[mode] = agents[0].final
        assert finals[mode] in optimal_set_from_quantized(q)
    assert finals["protocol"] == finals["deterministic"]


def test_exploit_segment():
    p = params(2, 3)
    a = idle(p, 3)
    a.final, a.row = (1, 3), 2
    a.start(a.exploit(2 ** 5))
    pulls = []
    while not a.done:
        pulls.append(a.act())
        a.observe(0.5)
    assert pulls == [3] * 32
    assert a.phase is Phase.EXPLOIT


def test_skip_persistence_and_sample_counts():
    cfg = RunConfig(ChannelModel(MeanMatrix(K2M3)), epochs=6)
    res = run_episode(cfg, 3)
    ell_f = res.stats.ell_f
    assert ell_f is not None
    for ell, phase in zip(res.trace.epoch, res.trace.phase):
        if ell > ell_f:
            assert phase not in ("fixing", "verify", "degraded_random")
    fixed_epochs = 6 - ell_f + 1
    for a in res.agents:
        assert a.counts[1:] == [fixed_epochs * res.params.gamma] * 3
        assert a.id == a.records[ell_f - 1].fixed_id

import math
from types import SimpleNamespace

import numpy as np
import pytest

from bbs_sense.coverage import SensingProfile, build_manhattan_grid
from bbs_sense.errors import InvalidConfigError, RejectedArrivalError
from bbs_sense.mechanism import (SECRETARY, THRESHOLD, MechanismConfig, initial_stage,
                                 last_stage_change, route_arrival, run_bbs,
                                 secretary_branch, stage_boundary, threshold_series)
from bbs_sense.rng import make_rng
from bbs_sense.scenario import ScenarioConfig, build_scenario
from bbs_sense.threshold import EqualSplit


def arrival(uid, t, theta=0.5):
    return SimpleNamespace(id=uid, ability=theta, arrival_time=t)


def fixed_profiles(mapping):
    return lambda user, effort: SensingProfile(mapping[user.id])


GRID = build_manhattan_grid(1, 0, 50, 0, 1.0)


def test_initial_stage_arithmetic():
    st = initial_stage(MechanismConfig(total_budget=32, horizon=32), GRID)
    assert st.stage_end == 1 and st.stage_budget == 1
    out = run_bbs([], MechanismConfig(total_budget=32, horizon=32), GRID)
    assert [s.t for s in out.stages] == [1, 2, 4, 8, 16, 32]


@pytest.mark.parametrize("T", [2, 4, 8, 16, 32, 64, 128, 256])
def test_budget_reaches_total_at_horizon(T):
    cfg = MechanismConfig(total_budget=10.0, horizon=T)
    st = initial_stage(cfg, GRID)
    while st.stage_end < T:
        st, _ = stage_boundary(st, cfg)
    assert st.stage_budget == pytest.approx(10.0) and st.stage_end == T


def test_stage_doubling_and_keep_previous():
    cfg = MechanismConfig(total_budget=32, horizon=32, initial_effort=0.3, initial_min_prize=0.2)
    st = initial_stage(cfg, GRID)
    new, rec = stage_boundary(st, cfg)
    assert (st.stage_budget, new.stage_budget) == (1, 2)
    assert new.stage_end == 2 * st.stage_end
    assert rec.kept_previous and new.threshold == st.threshold


def test_paid_gate():
    # single stage: T = 1 so B' = B = 5
    cfg = MechanismConfig(total_budget=5.0, horizon=1, initial_effort=0.75, initial_min_prize=3.0,
                          threshold_branch_probability=1.0, expected_bidders=1)
    out = run_bbs([arrival(1, 1)], cfg, GRID, fixed_profiles({1: range(6)}))
    assert out.payments == {1: pytest.approx(0.75 * 6)}
    out = run_bbs([arrival(1, 1)], cfg, GRID, fixed_profiles({1: range(2)}))
    assert out.payments == {} and out.sample == [1]
    # offer above remaining stage budget
    out = run_bbs([arrival(1, 1)], cfg, GRID, fixed_profiles({1: range(8)}))
    assert out.payments == {} and out.sample == [1]


def test_route_arrival():
    rng = make_rng(1)
    cfg = MechanismConfig(total_budget=1, horizon=1, threshold_branch_probability=1.0)
    assert all(route_arrival(None, cfg, rng) == THRESHOLD for _ in range(100))
    cfg = MechanismConfig(total_budget=1, horizon=1)
    hits = sum(route_arrival(None, cfg, rng) == THRESHOLD for _ in range(10**5))
    sd = math.sqrt(10**5 * (1 / 3) * (2 / 3))
    assert abs(hits - 10**5 / 3) < 3 * sd


def test_per_run_routing_shares_branch():
    sc = build_scenario(ScenarioConfig(n_users=60, horizon=64, arrival_rate=1.0), 3)
    for seed in range(4):
        cfg = MechanismConfig(total_budget=20, horizon=64, routing_mode="per_run", seed=seed,
                              expected_bidders=60)
        out = run_bbs(sc.users, cfg, sc.grid, sc.profile)
        branches = {e.branch for e in out.events if e.kind != "stage"}
        assert len(branches) == 1


def test_secretary_examples():
    assert secretary_branch([("a", 5)], 10, 1) is None
    assert secretary_branch([(1, 3), (2, 1), (3, 9), (4, 5)], 10, 1) == (3, 10)
    assert secretary_branch([(k, 10 - k) for k in range(6)], 10, 2) is None


def test_rejected_and_unsorted_arrivals():
    cfg = MechanismConfig(total_budget=5, horizon=4)
    with pytest.raises(RejectedArrivalError):
        run_bbs([arrival(1, 5)], cfg, GRID, fixed_profiles({1: [0]}))
    with pytest.raises(InvalidConfigError):
        run_bbs([arrival(1, 3), arrival(2, 2)], cfg, GRID, fixed_profiles({1: [0], 2: [1]}))


def test_config_validation():
    with pytest.raises(InvalidConfigError):
        MechanismConfig(total_budget=0, horizon=4)
    with pytest.raises(InvalidConfigError):
        MechanismConfig(total_budget=1, horizon=4, routing_mode="weird")


def test_full_run_feasible_and_deterministic():
    sc = build_scenario(ScenarioConfig(n_users=80, horizon=64, arrival_rate=1.5), 9)
    cfg = MechanismConfig(total_budget=40, horizon=64, seed=3, expected_bidders=80,
                          prize_policy=EqualSplit(3))
    a = run_bbs(sc.users, cfg, sc.grid, sc.profile)
    b = run_bbs(sc.users, cfg, sc.grid, sc.profile)
    assert a.events_csv() == b.events_csv() and a.stages_csv() == b.stages_csv()
    assert a.total_payment <= 40 + 1e-9
    spent = 0.0
    for ev in a.events:
        spent += ev.payment
        assert spent <= 40 + 1e-9
    assert len(threshold_series(a)) == len(a.stages) == 7
    assert set(a.sample) | {e.user for e in a.events if e.branch == SECRETARY} == {u.id for u in sc.users}


def test_last_stage_change():
    assert last_stage_change([1.0, 2.0, 2.2]) == pytest.approx(0.1)
    assert math.isnan(last_stage_change([1.0]))

import pytest

from conftest import E_STAR, make_ev
from evcharge.oracle import AlignmentError, compare_traces, simulate_timestep, validate
from evcharge.protocol import IDLE, simulate
from evcharge.scenario import ScenarioConfig, sample_fleet


def test_hold_mode_dt1_matches_exact(one_fcc):
    r = simulate_timestep(one_fcc, [make_ev(0)], 1.0, carry=False)
    tr = r.traces[0]
    assert tr.t_complete == 734.0
    assert tr.energy_delivered_ws == E_STAR


def test_hold_mode_dt60_distortion(one_fcc):
    fleet = [make_ev(0)]
    r = simulate_timestep(one_fcc, fleet, 60.0, carry=False, exact=False)
    tr = r.traces[0]
    assert tr.t_complete == 780.0
    overshoot = tr.energy_delivered_ws - E_STAR
    assert 0 < overshoot < 48_000 * 60
    assert simulate(one_fcc, fleet).traces[0].t_complete == 734.0


def test_zero_evs_all_idle():
    cfg = ScenarioConfig(ev_count=0, cc_count=2).validate()
    r = simulate_timestep(cfg, [], 1.0)
    assert r.column_logs == [[(0.0, IDLE)], [(0.0, IDLE)]]
    assert r.es_trace == []


def test_misaligned_dt_rejected(one_fcc):
    with pytest.raises(AlignmentError):
        simulate_timestep(one_fcc, [make_ev(0)], 7.0)


@pytest.mark.parametrize("strategy", ["FCFS", "SHRD"])
@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("dt", [1.0, 0.5])
def test_one_step_bound(strategy, seed, dt):
    cfg = ScenarioConfig(ev_count=3, cc_count=2, cc_kind="SCC", strategy=strategy).validate()
    fleet = sample_fleet(cfg, seed)
    rep = validate(cfg, fleet, dt)
    assert rep.max_energy_delta <= 11_000 * dt
    assert rep.max_ttr_delta <= dt


def test_aligned_no_contention_zero_ttr_delta(one_fcc):
    fleet = [make_ev(0, arrival=21_700.0)]
    rep = compare_traces(simulate(one_fcc, fleet), simulate_timestep(one_fcc, fleet, 1.0), 1.0)
    assert rep.max_ttr_delta == 0.0
    assert rep.max_energy_delta == 0.0


def test_compare_rejects_mismatched_scenarios(one_fcc):
    a = simulate(one_fcc, [make_ev(0)])
    b = simulate_timestep(one_fcc, [make_ev(0, arrival=5.0)], 1.0)
    with pytest.raises(ValueError):
        compare_traces(a, b, 1.0)


def test_report_outputs(tmp_path, one_scc):
    rep = validate(one_scc, [make_ev(0), make_ev(1, arrival=3.3)], 1.0)
    assert "max TTR delta" in rep.text()
    rep.write_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0].startswith("ev,energy_event_ws") and len(lines) == 3


@pytest.mark.parametrize("strategy", ["FCFS", "SHRD"])
@pytest.mark.parametrize("cap", [60_000.0, 1e6])
def test_convergence_across_step_sizes(strategy, cap):
    cfg = ScenarioConfig(ev_count=5, cc_count=2, cc_kind=["FCC", "SCC"], strategy=strategy,
                         es_cap_watts=cap).validate()
    for seed in range(3):
        fleet = sample_fleet(cfg, seed)
        exact = simulate(cfg, fleet)
        for dt in (10.0, 1.0, 0.1):
            stepped = simulate_timestep(cfg, fleet, dt, exact=False)
            assert all(0 <= p <= cap for _, p in stepped.es_trace)
            rep = compare_traces(exact, stepped, dt)
            assert rep.max_energy_delta <= 48_000 * dt
            assert rep.max_ttr_delta <= dt

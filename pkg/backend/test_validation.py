import json
import math
import os

import numpy as np
import pytest

from errors import ConfigurationError, DomainError
from scenario import apply_overrides, default_scenario
from validation import (
    BassParams, bass_closed_form, bass_ode, bass_params_for, bass_peak_time, compare_abm_to_sd, day_grid,
    reduced_scenario, rk4, validate_reduced_mode, within_tolerance,
)

TESTDATA = os.path.join(os.path.dirname(__file__), 'testdata')

slow = pytest.mark.skipif(not os.environ.get('RUN_SLOW'), reason="set RUN_SLOW=1 for full-size checks")


def bass_rate(params):
    n, p, q = params.n_total, params.p, params.q
    return lambda _t, a: (p + q * a / n) * (n - a)


def test_closed_form_starts_at_zero():
    assert bass_closed_form(BassParams(0.03, 0.38, 500, 10), 0.0) == 0.0


def test_pure_innovation_reaches_half_at_ln2_over_p():
    params = BassParams(0.2, 0.0, 500, 10)
    assert bass_closed_form(params, math.log(2) / 0.2) == pytest.approx(250.0)


def test_closed_form_golden_value():
    with open(os.path.join(TESTDATA, 'bass_golden.json')) as f:
        golden = json.load(f)
    params = BassParams(golden['p'], golden['q'], golden['n_total'], golden['t_years'])
    value = bass_closed_form(params, golden['t_years'])
    assert value == pytest.approx(golden['adopters'], abs=golden['abs_tolerance'])


def test_fine_rk4_agrees_with_closed_form():
    params = BassParams(0.03, 0.38, 500, 5)
    integrated = rk4(bass_rate(params), 0.0, [5.0], dt=1e-4)[0]
    assert abs(integrated - bass_closed_form(params, 5.0)) < 1e-3 * 500


def test_closed_form_needs_p():
    with pytest.raises(DomainError):
        bass_closed_form(BassParams(0.0, 0.4, 500, 1), 1.0)
    with pytest.raises(DomainError):
        bass_peak_time(BassParams(0.0, 0.4, 500, 1))


def test_ode_without_innovation_stays_at_zero():
    trajectory = bass_ode(BassParams(0.0, 0.5, 500, 2))
    assert len(trajectory) == round(2 * 365.25)
    assert np.all(trajectory == 0)


def test_ode_monotone_bounded_and_consistent():
    params = BassParams(0.03, 0.38, 500, 10)
    trajectory = bass_ode(params)
    assert np.all(np.diff(trajectory) >= 0)
    assert np.all(trajectory <= 500)
    closed = bass_closed_form(params, day_grid(params.n_days))
    assert np.max(np.abs(trajectory - closed)) < 1e-3 * 500


def test_rk4_fourth_order_convergence():
    coarse_dt = 1 / 365.25
    errors = []
    for dt in (coarse_dt, coarse_dt / 2):
        params = BassParams(1.0, 20.0, 500, 1.0, dt=dt)
        closed = bass_closed_form(params, day_grid(params.n_days))
        errors.append(np.max(np.abs(bass_ode(params) - closed)))
    assert 10 <= errors[0] / errors[1] <= 22


def test_inflection_at_peak_time():
    params = BassParams(0.03, 0.38, 500, 20)
    t_star = bass_peak_time(params)
    assert t_star == pytest.approx(math.log(0.38 / 0.03) / 0.41)
    step = 1e-3
    t = np.arange(0, 20, step)
    second = np.diff(bass_closed_form(params, t), n=2)
    sign_change = t[1:-1][np.flatnonzero(np.diff(np.sign(second)) < 0)[0] + 1]
    assert abs(sign_change - t_star) < 5 * step


def test_no_interior_peak_when_imitation_is_weak():
    assert bass_peak_time(BassParams(0.3, 0.1, 500, 10)) == 0.0


def test_sup_norm_comparison():
    base = np.linspace(0, 100, 50)
    assert compare_abm_to_sd(base, base) == 0.0
    assert compare_abm_to_sd(base + 3.5, base) == pytest.approx(3.5)
    with pytest.raises(DomainError):
        compare_abm_to_sd(base, base[:-1])


def test_params_validation():
    BassParams(0.01, 0.3, 500, 10).validate()
    with pytest.raises(ConfigurationError):
        BassParams(0.01, 0.3, 500, 10, dt=0.02).validate()
    with pytest.raises(ConfigurationError):
        BassParams(-0.01, 0.3, 500, 10).validate()


def test_scenario_mapping():
    params = bass_params_for(default_scenario())
    assert params.p == pytest.approx(0.011)
    assert params.q == pytest.approx(100 * 0.015)
    assert params.n_total == 500
    assert params.n_days == 3650


def test_reduced_scenario_opens_every_gate():
    config = apply_overrides(default_scenario(), {'adoption.incentive_beta': '100',
                                                  'population.cogency': 'uniform:0.1,0.2'})
    reduced = reduced_scenario(config)
    assert reduced.adoption.awareness_threshold == 0.0
    assert reduced.adoption.incentive_beta == 0.0
    assert all(s.buy_probability == 1.0 for s in reduced.population.stereotypes)
    assert reduced.population.cogency.kind == 'adoption_fraction'
    reduced.population.validate()


def test_comparison_frame_layout():
    config = apply_overrides(default_scenario(), {'run.horizon_days': '20', 'run.replications': '2'})
    frame = validate_reduced_mode(config, workers=1)
    assert list(frame.columns) == ['day', 'abm_mean', 'abm_std', 'sd_closed_form', 'sd_ode', 'abs_deviation']
    assert frame['day'].tolist() == list(range(20))
    assert within_tolerance(frame, 500)


def test_reduced_mode_tracks_the_oracle_early():
    config = apply_overrides(default_scenario(), {
        'adoption.ad_rate': '0.2',
        'run.horizon_days': '180',
        'run.replications': '10',
    })
    frame = validate_reduced_mode(config, base_seed=2010, workers=1)
    assert frame['abm_mean'].iloc[-1] > 30
    assert frame['abs_deviation'].max() <= 0.05 * 500


@slow
def test_reduced_mode_tracks_the_oracle():
    config = apply_overrides(default_scenario(), {
        'adoption.ad_rate': '0.2',
        'run.horizon_days': '1095',
        'run.replications': '40',
    })
    frame = validate_reduced_mode(config, base_seed=2010)
    assert frame['abm_mean'].iloc[-1] > 400
    assert frame['abs_deviation'].max() <= 0.05 * 500


@slow
def test_reduced_mode_default_rates_200_replications():
    config = apply_overrides(default_scenario(), {'run.replications': '200'})
    frame = validate_reduced_mode(config, base_seed=2010)
    assert compare_abm_to_sd(frame['abm_mean'], frame['sd_closed_form']) <= 0.05 * 500

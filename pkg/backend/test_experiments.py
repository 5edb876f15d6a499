import logging
import os

import numpy as np
import pandas as pd
import pytest
from sqlalchemy.exc import OperationalError

import experiments
from engine import run_replications
from errors import ConfigurationError
from experiments import PRESETS, parse_sweep, resolve_preset, run_experiment
from scenario import apply_overrides, default_scenario, is_scalar_key, parse_scenario
from store import load_series

slow = pytest.mark.skipif(not os.environ.get('RUN_SLOW'), reason="set RUN_SLOW=1 for full-size checks")

SERIES_HEADER = 'day,ev_count,new_adopters,revenue,energy_proxy,peak_occupancy,rejections'


def tiny(**overrides):
    text = {'population.n_agents': '60', 'lot.capacity': '80', 'run.horizon_days': '20',
            'run.replications': '2', 'adoption.ad_rate': '3.0'}
    text.update({k: str(v) for k, v in overrides.items()})
    return apply_overrides(default_scenario(), text)


def pooled_sem(a, b):
    return np.sqrt(np.var(a, ddof=1) / len(a) + np.var(b, ddof=1) / len(b))


def test_parse_sweep():
    assert parse_sweep('adoption.ad_rate=0.01,0.02') == ('adoption.ad_rate', ('0.01', '0.02'))
    assert parse_sweep('tariff.ev_strategy = multiplier:1.0; multiplier:0.5') == (
        'tariff.ev_strategy', ('multiplier:1.0', 'multiplier:0.5'))
    for bad in ('adoption.ad_rate', 'adoption.ad_rate=', 'adoption.ad_rate= '):
        with pytest.raises(ConfigurationError):
            parse_sweep(bad)


def test_unknown_preset():
    with pytest.raises(ConfigurationError) as exc:
        resolve_preset('exp9')
    assert exc.value.key == 'preset'


@pytest.mark.parametrize('name', sorted(PRESETS))
def test_presets_resolve_and_sweep_cleanly(name):
    config, (key, values) = resolve_preset(name)
    assert config.lot_capacity == 600
    assert config.population.n_agents == 500
    assert config.adoption.awareness_threshold == 50.0
    assert config.horizon_days == 3650
    assert is_scalar_key(key)
    for value in values:
        apply_overrides(config, {key: value})


def test_exp1_sweeps_the_ev_multiplier():
    config, (key, values) = resolve_preset('exp1')
    assert config.adoption.incentive_beta > 0
    assert key == 'tariff.ev_strategy'
    assert values == ('multiplier:1.0', 'multiplier:0.5', 'multiplier:0.0')


def test_preset_keeps_base_scenario():
    base = parse_scenario("adoption.ad_rate = 0.02\n")
    config, _ = resolve_preset('exp2', base=base)
    assert config.adoption.ad_rate == 0.02
    assert config.tariff.ev_strategy.kind == 'same_as_a'


def test_single_value_sweep_equals_plain_batch():
    config = tiny()
    result = run_experiment(config, sweep=('adoption.ad_rate', ['1']), workers=1)
    assert len(result.arms) == 1
    arm = result.arms[0]
    assert arm.value == '1.0'
    plain = run_replications(apply_overrides(config, {'adoption.ad_rate': '1.0'}), workers=1)
    assert arm.summary.final_counts.tolist() == plain.final_counts.tolist()
    assert arm.summary.mean.equals(plain.mean)


def test_no_sweep_gives_one_base_arm():
    result = run_experiment(tiny(), workers=1)
    assert result.sweep_key is None
    assert [arm.value for arm in result.arms] == [None]
    assert result.arms[0].stem.endswith('_base')
    assert result.files == []


def test_sweep_key_must_be_scalar():
    with pytest.raises(ConfigurationError) as exc:
        run_experiment(tiny(), sweep=('tariff.table.A', ['1,2,3,4,5,6,7']), workers=1)
    assert exc.value.key == 'tariff.table.A'
    with pytest.raises(ConfigurationError):
        run_experiment(tiny(), sweep=('adoption.ad_rate', []), workers=1)
    with pytest.raises(ConfigurationError):
        run_experiment(tiny(), sweep=('adoption.ad_rate', ['-1']), workers=1)


def test_output_files(tmp_path):
    out = str(tmp_path / 'out')
    result = run_experiment(tiny(), sweep=('adoption.ad_rate', ['1.0', '3.0']), out_dir=out, workers=1)

    names = sorted(os.listdir(out))
    assert len(names) == 2 * (1 + 2 + 1) + 2
    assert len(result.files) == len(names)
    assert 'manifest.csv' in names
    assert sum(n.endswith('_series.csv') for n in names) == 4
    assert sum(n.endswith('_aggregate.csv') for n in names) == 2
    assert sum(n.endswith('_summary.csv') for n in names) == 1

    for arm in result.arms:
        with open(os.path.join(out, f"{arm.stem}_rep000_series.csv")) as f:
            lines = f.read().splitlines()
        assert lines[0] == SERIES_HEADER
        assert len(lines) == 1 + 20
        with open(os.path.join(out, f"{arm.stem}_scenario.txt")) as f:
            assert parse_scenario(f.read()) == arm.config


def test_manifest_and_summary(tmp_path):
    out = str(tmp_path)
    result = run_experiment(tiny(), sweep=('adoption.ad_rate', ['1.0', '3.0']), out_dir=out, workers=1)
    manifest = pd.read_csv(os.path.join(out, 'manifest.csv'), keep_default_na=False)
    assert list(manifest.columns) == ['file', 'kind', 'sweep_key', 'sweep_value', 'replication', 'digest']
    assert sorted(manifest['file']) == sorted(n for n in os.listdir(out) if n != 'manifest.csv')
    assert manifest['kind'].value_counts().to_dict() == {'series': 4, 'scenario': 2, 'aggregate': 2, 'summary': 1}
    assert set(manifest['digest']) >= {arm.digest for arm in result.arms}

    summary = result.summary_frame()
    assert len(summary) == 4
    assert summary['sweep_key'].unique().tolist() == ['adoption.ad_rate']
    assert summary['sweep_value'].tolist() == ['1.0', '1.0', '3.0', '3.0']
    expected = np.concatenate([arm.summary.final_counts for arm in result.arms])
    assert summary['final_ev_count'].tolist() == expected.tolist()


def test_arm_statistics():
    result = run_experiment(tiny(**{'run.replications': 3}), sweep=('adoption.ad_rate', ['3.0']), workers=1)
    stats = result.arm_statistics()
    counts = result.arms[0].summary.final_counts.astype(float)
    row = stats.iloc[0]
    assert row['replications'] == 3
    assert row['mean_final_ev_count'] == pytest.approx(counts.mean())
    assert row['std_final_ev_count'] == pytest.approx(counts.std())
    assert row['sem_final_ev_count'] == pytest.approx(counts.std(ddof=1) / np.sqrt(3))


def test_outputs_are_byte_identical_across_runs(tmp_path):
    config = tiny(**{'adoption.adoption_fraction': 0.2})
    sweep = ('tariff.ev_strategy', ['multiplier:1.0', 'multiplier:0.0'])
    first, second = str(tmp_path / 'a'), str(tmp_path / 'b')
    run_experiment(config, sweep=sweep, out_dir=first, workers=1)
    run_experiment(config, sweep=sweep, out_dir=second, workers=2)
    assert sorted(os.listdir(first)) == sorted(os.listdir(second))
    for name in os.listdir(first):
        with open(os.path.join(first, name), 'rb') as a, open(os.path.join(second, name), 'rb') as b:
            assert a.read() == b.read(), name


def test_series_persisted_to_database(tmp_path):
    url = f"sqlite:///{tmp_path / 'runs.db'}"
    result = run_experiment(tiny(), sweep=('adoption.ad_rate', ['1.0', '3.0']), workers=1, database_url=url)
    rows = load_series(url)
    assert len(rows) == 2 * 2 * 20
    assert list(rows.columns[:6]) == ['digest', 'sweep_key', 'sweep_value', 'seed', 'replication', 'day']
    assert set(rows['digest']) == {arm.digest for arm in result.arms}
    assert rows['seed'].iloc[0] == str(result.arms[0].summary.runs[0].seed)


def test_database_failure_is_logged_not_fatal(monkeypatch, caplog):
    def unavailable(frame, database_url, table='run_series'):
        raise OperationalError('INSERT', {}, Exception('database is locked'))

    monkeypatch.setattr(experiments, 'save_series', unavailable)
    with caplog.at_level(logging.WARNING, logger='experiments'):
        result = run_experiment(tiny(), workers=1, database_url='sqlite:///unused.db')
    assert len(result.arms) == 1
    assert 'Database write skipped' in caplog.text


# ============================================================================
# PRESET OUTCOMES
# ============================================================================

def _preset_arms(name, replications, values=None):
    config, (key, preset_values) = resolve_preset(name)
    config = apply_overrides(config, {'run.replications': str(replications)})
    return run_experiment(config, sweep=(key, values or preset_values)).arms


def _ordered_and_separated(arms):
    counts = [arm.summary.final_counts.astype(float) for arm in arms]
    means = [c.mean() for c in counts]
    assert means == sorted(means)
    assert means[-1] - means[0] > 2 * pooled_sem(counts[-1], counts[0])


# Ten-year presets at 100 replications; skipped tests never build these fixtures
@pytest.fixture(scope='module')
def exp1_arms():
    return _preset_arms('exp1', 100)


@pytest.fixture(scope='module')
def exp2_arms():
    return _preset_arms('exp2', 100)


@slow
def test_cheaper_ev_parking_drives_adoption(exp1_arms):
    _ordered_and_separated(exp1_arms)


@slow
def test_exp1_lot_never_overflows(exp1_arms):
    for arm in exp1_arms:
        for run in arm.summary.runs:
            assert run.series.rejections.sum() == 0


@slow
def test_exp1_workday_energy_never_rises(exp1_arms):
    for arm in exp1_arms:
        for run in arm.summary.runs:
            energy = run.series.energy_proxy[run.series.peak_occupancy > 0]
            assert np.all(np.diff(energy) <= 1e-9)


@slow
def test_cheaper_ev_parking_saves_energy(exp1_arms):
    priced, free = (np.mean([run.series.energy_proxy.sum() for run in arm.summary.runs])
                    for arm in (exp1_arms[0], exp1_arms[-1]))
    assert free < priced


@slow
def test_word_of_mouth_drives_adoption(exp2_arms):
    _ordered_and_separated(exp2_arms)

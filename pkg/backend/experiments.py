"""
Experiment Runner
Named presets, parameter sweeps and CSV emission of run series, per-arm
aggregates and final EV count summaries.
"""

import logging
import os
import re
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sqlalchemy.exc import SQLAlchemyError

from engine import ReplicationSummary, run_replications
from errors import ConfigurationError
from scenario import (
    ScenarioConfig, apply_overrides, format_value, is_scalar_key, scenario_digest, serialize_scenario,
)
from store import save_series

logger = logging.getLogger(__name__)

Sweep = Tuple[str, Sequence[str]]

# Car park of 600 spaces, 500 staff, awareness threshold 50, ten years
BASE_OVERRIDES = {
    'lot.capacity': '600',
    'population.n_agents': '500',
    'adoption.awareness_threshold': '50',
    'run.horizon_days': '3650',
}

# Sensitivity of the buy probability to the yearly parking saving
INCENTIVE_BETA = '200'


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    overrides: Mapping[str, str]
    sweep_key: str
    sweep_values: Tuple[str, ...]

    @property
    def sweep(self) -> Sweep:
        return self.sweep_key, self.sweep_values


PRESETS: Dict[str, Preset] = {
    'exp1': Preset(
        'exp1', "EV parking charge as a multiple of the category A row",
        {**BASE_OVERRIDES, 'adoption.incentive_beta': INCENTIVE_BETA},
        'tariff.ev_strategy', ('multiplier:1.0', 'multiplier:0.5', 'multiplier:0.0'),
    ),
    'exp2': Preset(
        'exp2', "Word-of-mouth strength (adoption fraction)",
        {**BASE_OVERRIDES, 'adoption.incentive_beta': INCENTIVE_BETA, 'tariff.ev_strategy': 'same_as_a'},
        'adoption.adoption_fraction', ('0', '0.02', '0.05'),
    ),
    'awareness': Preset(
        'awareness', "Energy awareness threshold",
        {**BASE_OVERRIDES, 'adoption.incentive_beta': INCENTIVE_BETA},
        'adoption.awareness_threshold', ('30', '50', '70'),
    ),
    'subsidy': Preset(
        'subsidy', "Purchase subsidy against an EV price premium",
        {**BASE_OVERRIDES, 'adoption.incentive_beta': '10',
         'adoption.ev_price': '30000', 'adoption.conventional_price': '25000'},
        'adoption.subsidy_fraction', ('0', '0.1', '0.25'),
    ),
}


def resolve_preset(name: str, base: Optional[ScenarioConfig] = None) -> Tuple[ScenarioConfig, Sweep]:
    if name not in PRESETS:
        raise ConfigurationError('preset', f"unknown preset {name!r}, expected one of {', '.join(PRESETS)}")
    preset = PRESETS[name]
    return apply_overrides(base or ScenarioConfig(), preset.overrides), preset.sweep


def parse_sweep(text: str) -> Sweep:
    """`key=v1,v2,...`; values are split on ';' instead when one is present"""
    key, sep, values = text.partition('=')
    key = key.strip()
    if not sep or not values.strip():
        raise ConfigurationError('sweep', f"expected <key>=<v1,v2,...>, got {text!r}")
    separator = ';' if ';' in values else ','
    return key, tuple(v.strip() for v in values.split(separator) if v.strip())


def _slug(text: str) -> str:
    return re.sub(r'[^A-Za-z0-9.]+', '-', text).strip('-') or 'value'


@dataclass
class Arm:
    """One sweep value and its replication batch"""
    value: Optional[str]
    config: ScenarioConfig
    digest: str
    summary: ReplicationSummary

    @property
    def stem(self) -> str:
        return f"{self.digest[:12]}_{_slug(self.value) if self.value is not None else 'base'}"


@dataclass
class ExperimentResult:
    sweep_key: Optional[str]
    arms: List[Arm]
    files: List[str] = field(default_factory=list)

    def summary_frame(self) -> pd.DataFrame:
        rows = []
        for arm in self.arms:
            for r, run in enumerate(arm.summary.runs):
                rows.append({
                    'sweep_key': self.sweep_key or '',
                    'sweep_value': arm.value or '',
                    'replication': r,
                    'seed': run.seed,
                    'final_ev_count': run.final_ev_count,
                    'digest': arm.digest,
                })
        return pd.DataFrame(rows, columns=['sweep_key', 'sweep_value', 'replication', 'seed',
                                           'final_ev_count', 'digest'])

    def arm_statistics(self) -> pd.DataFrame:
        """Mean, std (ddof=0) and standard error of the final EV count per arm"""
        rows = []
        for arm in self.arms:
            counts = arm.summary.final_counts.astype(float)
            rows.append({
                'sweep_value': arm.value or '',
                'replications': len(counts),
                'mean_final_ev_count': counts.mean(),
                'std_final_ev_count': counts.std(),
                'sem_final_ev_count': counts.std(ddof=1) / np.sqrt(len(counts)) if len(counts) > 1 else 0.0,
                'mean_total_energy': float(np.mean([run.series.energy_proxy.sum() for run in arm.summary.runs])),
                'mean_total_revenue': float(np.mean([run.series.revenue.sum() for run in arm.summary.runs])),
            })
        return pd.DataFrame(rows)


def _sweep_configs(config: ScenarioConfig, sweep: Optional[Sweep]) -> List[Tuple[Optional[str], ScenarioConfig]]:
    if sweep is None:
        return [(None, config)]
    key, values = sweep
    if not is_scalar_key(key):
        raise ConfigurationError(key, "sweep key must be a scalar scenario key")
    if not values:
        raise ConfigurationError(key, "sweep needs at least one value")
    arms = []
    for value in values:
        swept = apply_overrides(config, {key: value})
        arms.append((format_value(swept, key), swept))
    return arms


def _write_csv(frame: pd.DataFrame, out_dir: str, name: str, files: List[str]) -> str:
    path = os.path.join(out_dir, name)
    frame.to_csv(path, index=False)
    files.append(path)
    return path


def _manifest_row(path: str, kind: str, arm: Arm, sweep_key: Optional[str], replication='') -> dict:
    return {'file': os.path.basename(path), 'kind': kind, 'sweep_key': sweep_key or '',
            'sweep_value': arm.value or '', 'replication': replication, 'digest': arm.digest}


def _persist(arm: Arm, sweep_key: Optional[str], database_url: str):
    frames = []
    for r, run in enumerate(arm.summary.runs):
        frame = run.series.to_dataframe()
        frame.insert(0, 'replication', r)
        frame.insert(0, 'seed', str(run.seed))
        frame.insert(0, 'sweep_value', arm.value or '')
        frame.insert(0, 'sweep_key', sweep_key or '')
        frame.insert(0, 'digest', arm.digest)
        frames.append(frame)
    try:
        save_series(pd.concat(frames, ignore_index=True), database_url)
    except SQLAlchemyError as exc:
        logger.warning("Database write skipped for %s: %s", arm.stem, exc)


def run_experiment(config: ScenarioConfig, sweep: Optional[Sweep] = None, out_dir: Optional[str] = None,
                   workers: Optional[int] = None, database_url: Optional[str] = None) -> ExperimentResult:
    """One replication batch per sweep value.

    With out_dir, writes per-run series CSVs, one aggregate CSV per sweep
    value, a summary CSV of final EV counts, the resolved scenario text of
    each arm and a manifest listing every file with its scenario digest.
    """
    arm_configs = _sweep_configs(config, sweep)
    sweep_key = sweep[0] if sweep else None

    arms = []
    for value, arm_config in arm_configs:
        logger.info("Arm %s=%s", sweep_key or '-', value or '-')
        summary = run_replications(arm_config, workers=workers)
        arms.append(Arm(value, arm_config, scenario_digest(arm_config), summary))
    result = ExperimentResult(sweep_key, arms)

    if database_url:
        for arm in arms:
            _persist(arm, sweep_key, database_url)

    if out_dir is None:
        return result

    os.makedirs(out_dir, exist_ok=True)
    manifest = []
    for arm in arms:
        scenario_path = os.path.join(out_dir, f"{arm.stem}_scenario.txt")
        with open(scenario_path, 'w', encoding='utf-8') as f:
            f.write(serialize_scenario(arm.config))
        result.files.append(scenario_path)
        manifest.append(_manifest_row(scenario_path, 'scenario', arm, sweep_key))

        for r, run in enumerate(arm.summary.runs):
            path = _write_csv(run.series.to_dataframe(), out_dir, f"{arm.stem}_rep{r:03d}_series.csv", result.files)
            manifest.append(_manifest_row(path, 'series', arm, sweep_key, r))

        path = _write_csv(arm.summary.aggregate_frame(), out_dir, f"{arm.stem}_aggregate.csv", result.files)
        manifest.append(_manifest_row(path, 'aggregate', arm, sweep_key))

    base_digest = scenario_digest(config)
    summary_path = _write_csv(result.summary_frame(), out_dir, f"{base_digest[:12]}_summary.csv", result.files)
    manifest.append({'file': os.path.basename(summary_path), 'kind': 'summary', 'sweep_key': sweep_key or '',
                     'sweep_value': '', 'replication': '', 'digest': base_digest})
    _write_csv(pd.DataFrame(manifest), out_dir, 'manifest.csv', result.files)

    logger.info("Wrote %d files to %s", len(result.files), out_dir)
    return result

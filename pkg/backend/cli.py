"""
Command-line entry point: scenario runs, presets, sweeps and the
reduced-mode Bass check.

    python backend/cli.py --preset exp1 --replications 100 --out results/exp1
    python backend/cli.py --scenario my.scenario --sweep adoption.ad_rate=0.01,0.02
    python backend/cli.py --validate-bass --replications 200
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

from errors import ConfigurationError, SimulationError
from experiments import PRESETS, ExperimentResult, parse_sweep, resolve_preset, run_experiment
from scenario import ScenarioConfig, apply_overrides, load_scenario, scenario_digest
from validation import bass_params_for, bass_peak_time, reduced_scenario, validate_reduced_mode, within_tolerance

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='evsim',
        description="Agent-based simulation of EV adoption under workplace parking charges",
    )
    parser.add_argument('--scenario', help="scenario file of `key = value` lines")
    parser.add_argument('--preset', choices=sorted(PRESETS), help="named experiment preset")
    parser.add_argument('--sweep', help="sweep a scalar key: <key>=<v1,v2,...>")
    parser.add_argument('--seed', help="base seed (unsigned 64-bit)")
    parser.add_argument('--replications', help="replications per sweep value")
    parser.add_argument('--horizon-days', help="simulated days per run")
    parser.add_argument('--out', default='results', help="output directory (default: results)")
    parser.add_argument('--validate-bass', action='store_true',
                        help="compare the reduced-mode agent model with the Bass oracle")
    parser.add_argument('--workers', type=int, help="worker processes (default: SIM_WORKERS or CPU count)")
    parser.add_argument('--database-url', default=os.environ.get('DATABASE_URL'),
                        help="also append series to this database (default: DATABASE_URL)")
    parser.add_argument('--log-level', default=os.environ.get('LOG_LEVEL', 'INFO'),
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    return parser


def resolve_config(args: argparse.Namespace):
    """Scenario file, then preset, then command-line overrides"""
    config = load_scenario(args.scenario) if args.scenario else ScenarioConfig()
    sweep = None
    if args.preset:
        config, sweep = resolve_preset(args.preset, base=config)

    flags = {'run.base_seed': args.seed, 'run.replications': args.replications,
             'run.horizon_days': args.horizon_days}
    overrides = {key: value for key, value in flags.items() if value is not None}
    if overrides:
        config = apply_overrides(config, overrides)
    if args.sweep:
        sweep = parse_sweep(args.sweep)
    return config, sweep


def print_experiment(result: ExperimentResult, out_dir: str):
    stats = result.arm_statistics()
    print("=" * 60)
    print(f"EXPERIMENT: {result.sweep_key or 'single scenario'}")
    print("=" * 60)
    for _, row in stats.iterrows():
        label = row['sweep_value'] or 'base'
        print(f"\n{label}")
        print(f"   Replications:      {row['replications']}")
        print(f"   Final EV count:    {row['mean_final_ev_count']:.1f} +/- {row['sem_final_ev_count']:.1f} (s.e.)")
        print(f"   Total energy:      {row['mean_total_energy']:,.0f} gCO2")
        print(f"   Total revenue:     {row['mean_total_revenue']:,.2f}")
    print(f"\nWrote {len(result.files)} files to {out_dir}")


def validate_bass(config: ScenarioConfig, out_dir: str, workers: Optional[int]) -> bool:
    frame = validate_reduced_mode(config, workers=workers)
    params = bass_params_for(reduced_scenario(config))
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{scenario_digest(config)[:12]}_bass_validation.csv")
    frame.to_csv(path, index=False)

    passed = within_tolerance(frame, params.n_total)
    deviation = float(frame['abs_deviation'].max()) if len(frame) else 0.0
    print("=" * 60)
    print("REDUCED-MODE BASS VALIDATION")
    print("=" * 60)
    print(f"   p (ad rate):         {params.p:.4f} /yr")
    print(f"   q (contacts x cog.): {params.q:.4f} /yr")
    if params.p > 0:
        print(f"   Peak adoption at:    {bass_peak_time(params):.2f} years")
    print(f"   Agents:              {params.n_total}")
    print(f"   Replications:        {config.replications}")
    print(f"   Sup deviation:       {deviation:.2f} agents")
    print(f"   Result:              {'PASS' if passed else 'FAIL'}")
    print(f"\nWrote {path}")
    return passed


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)

    try:
        config, sweep = resolve_config(args)
    except (ConfigurationError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.validate_bass:
            return EXIT_OK if validate_bass(config, args.out, args.workers) else EXIT_FAILED
        result = run_experiment(config, sweep=sweep, out_dir=args.out, workers=args.workers,
                                database_url=args.database_url)
        print_experiment(result, args.out)
        return EXIT_OK
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except SimulationError as exc:
        logger.error("Simulation failed: %s", exc)
        return EXIT_FAILED


if __name__ == '__main__':
    sys.exit(main())

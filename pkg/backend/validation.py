"""
Bass Diffusion Oracle
Mixed-influence Bass model (closed form and fixed-step RK4) used to check the
agent simulation in its reduced mode, where every decision gate is open.

Mapping from a scenario: p = ad_rate, q = contact_rate * cogency,
n_total = number of agents. Simulation day d is compared with the oracle at
t = (d + 1) / 365.25 years, the end of that day.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd

from adoption import DAYS_PER_YEAR
from engine import run_replications
from errors import ConfigurationError, DomainError
from population import CogencySpec
from scenario import ScenarioConfig

logger = logging.getLogger(__name__)

# sup-norm tolerance of the reduced-mode comparison, as a fraction of n_total
BASS_TOLERANCE_FRACTION = 0.05


@dataclass(frozen=True)
class BassParams:
    p: float                # innovation coefficient per year
    q: float                # imitation coefficient per year
    n_total: float
    horizon_years: float
    dt: float = 1e-3        # integration step in years

    def validate(self):
        if not (self.p >= 0 and self.q >= 0):
            raise ConfigurationError('p', f"coefficients must be >= 0, got p={self.p}, q={self.q}")
        if self.n_total < 0:
            raise ConfigurationError('n_total', "market size must be >= 0")
        if self.horizon_years < 0:
            raise ConfigurationError('horizon_years', "horizon must be >= 0")
        if not 0 < self.dt <= 0.01:
            raise ConfigurationError('dt', f"step {self.dt} outside (0, 0.01] years")

    @property
    def n_days(self) -> int:
        return int(round(self.horizon_years * DAYS_PER_YEAR))


def bass_closed_form(params: BassParams, t):
    """Expected adopters at time t (years); t may be an array"""
    if params.p <= 0:
        raise DomainError("closed form needs p > 0; use bass_ode for p = 0")
    p, q = params.p, params.q
    decay = np.exp(-(p + q) * np.asarray(t, dtype=float))
    value = params.n_total * (1.0 - decay) / (1.0 + (q / p) * decay)
    return float(value) if np.ndim(value) == 0 else value


def rk4(f: Callable[[float, float], float], y0: float, sample_times: Sequence[float],
        dt: float, t0: float = 0.0) -> np.ndarray:
    """Classic fixed-step Runge-Kutta integration of dy/dt = f(t, y).

    Each interval between consecutive sample times is split into the fewest
    equal steps no longer than dt; the solution is returned at sample_times.
    """
    out = np.empty(len(sample_times))
    t, y = t0, y0
    for i, target in enumerate(sample_times):
        span = target - t
        if span < 0:
            raise DomainError("sample times must be non-decreasing and start after t0")
        steps = math.ceil(span / dt - 1e-9) if span > 0 else 0
        if steps:
            h = span / steps
            for _ in range(steps):
                k1 = f(t, y)
                k2 = f(t + h / 2, y + h * k1 / 2)
                k3 = f(t + h / 2, y + h * k2 / 2)
                k4 = f(t + h, y + h * k3)
                y += h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
                t += h
        t = target
        out[i] = y
    return out


def day_grid(n_days: int) -> np.ndarray:
    """End-of-day sample times in years for simulation days 0..n_days-1"""
    return np.arange(1, n_days + 1, dtype=float) / DAYS_PER_YEAR


def bass_ode(params: BassParams) -> np.ndarray:
    """RK4 solution of dA/dt = (p + q A / n)(n - A), A(0) = 0, sampled per day"""
    params.validate()
    n, p, q = params.n_total, params.p, params.q
    if n == 0:
        return np.zeros(params.n_days)

    def rate(_t, a):
        return (p + q * a / n) * (n - a)

    return rk4(rate, 0.0, day_grid(params.n_days), params.dt)


def compare_abm_to_sd(abm_mean, sd) -> float:
    """Sup-norm deviation between two trajectories on the same day grid"""
    abm_mean = np.asarray(abm_mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    if abm_mean.shape != sd.shape:
        raise DomainError(f"trajectories sampled on different grids: {abm_mean.shape} vs {sd.shape}")
    if abm_mean.size == 0:
        return 0.0
    return float(np.max(np.abs(abm_mean - sd)))


def bass_peak_time(params: BassParams) -> float:
    """Inflection time of the closed form in years; 0 when q <= p"""
    if params.p <= 0:
        raise DomainError("peak time needs p > 0")
    if params.q <= params.p:
        return 0.0
    return math.log(params.q / params.p) / (params.p + params.q)


def bass_params_for(config: ScenarioConfig, dt: float = 1e-3) -> BassParams:
    """Bass coefficients implied by a scenario"""
    adoption = config.adoption
    low, high = config.population.cogency.bounds(adoption.adoption_fraction)
    return BassParams(
        p=adoption.ad_rate,
        q=adoption.contact_rate * (low + high) / 2,
        n_total=config.population.n_agents,
        horizon_years=config.horizon_days / DAYS_PER_YEAR,
        dt=dt,
    )


def reduced_scenario(config: ScenarioConfig) -> ScenarioConfig:
    """Open every decision gate so the agent model collapses to a Bass process"""
    population = config.population
    stereotypes = tuple(replace(s, buy_probability=1.0) for s in population.stereotypes)
    return replace(
        config,
        population=replace(population, stereotypes=stereotypes, cogency=CogencySpec()),
        adoption=replace(config.adoption, awareness_threshold=0.0, incentive_beta=0.0),
    )


def validate_reduced_mode(config: ScenarioConfig, base_seed: Optional[int] = None, n_reps: Optional[int] = None,
                          workers: Optional[int] = None) -> pd.DataFrame:
    """Run the reduced-mode agent model and line it up against the oracle.

    Columns: day, abm_mean, abm_std, sd_closed_form, sd_ode, abs_deviation.
    The deviation is taken against the closed form, or against the ODE when
    p = 0.
    """
    reduced = reduced_scenario(config)
    params = bass_params_for(reduced)
    summary = run_replications(reduced, base_seed=base_seed, n_reps=n_reps, workers=workers)

    days = summary.mean['day'].to_numpy()
    times = (days + 1) / DAYS_PER_YEAR
    ode = bass_ode(params)[:len(days)]
    closed = bass_closed_form(params, times) if params.p > 0 else np.full(len(days), np.nan)
    oracle = closed if params.p > 0 else ode

    frame = pd.DataFrame({
        'day': days,
        'abm_mean': summary.mean['ev_count'].to_numpy(),
        'abm_std': summary.std['ev_count'].to_numpy(),
        'sd_closed_form': closed,
        'sd_ode': ode,
    })
    frame['abs_deviation'] = np.abs(frame['abm_mean'] - oracle)

    deviation = compare_abm_to_sd(frame['abm_mean'], oracle)
    logger.info("Reduced-mode check: p=%.4f q=%.4f n=%d, sup deviation %.2f agents over %d replications",
                params.p, params.q, params.n_total, deviation, len(summary.runs))
    return frame


def within_tolerance(frame: pd.DataFrame, n_total: float,
                     fraction: float = BASS_TOLERANCE_FRACTION) -> bool:
    if frame.empty:
        return True
    return float(frame['abs_deviation'].max()) <= fraction * n_total

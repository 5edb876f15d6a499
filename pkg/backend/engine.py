"""
Discrete-Event Engine
Clock, event queue, message delivery, metrics collection and the
replication runner. One run is single-threaded and owns all mutable state;
replications may run in worker processes.
"""

import heapq
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from concurrent.futures.process import BrokenProcessPool
from dataclasses import dataclass
from enum import IntEnum
from typing import Any, Dict, List, NamedTuple, Optional

import numpy as np
import pandas as pd

from adoption import (
    PurchaseTrigger, TriggerKind, daily_wom_contacts, decide_purchase, next_ad_exposure,
)
from errors import ProtocolError, ReplicationError, SimulationError
from mobility import (
    MINUTES_PER_DAY, CommutePhase, ParkingLot, audit_lot, contact_minutes, day_schedule,
    release_spaces, request_spaces,
)
from population import CATEGORIES, CommuteState, sample_population
from scenario import ScenarioConfig, scenario_digest
from tariff import CommuterColumns, accrue_day

logger = logging.getLogger(__name__)

METRICS = ('ev_count', 'new_adopters', 'revenue', 'energy_proxy', 'peak_occupancy', 'rejections')
SERIES_COLUMNS = ('day',) + METRICS

TICK_MINUTE = MINUTES_PER_DAY - 1


class EventKind(IntEnum):
    """Tie-break priority of events scheduled for the same minute"""
    COMMUTE = 0
    WOM_DELIVERY = 1
    AD_EXPOSURE = 2
    METRICS_TICK = 3


class SimEvent(NamedTuple):
    time: int
    kind: EventKind
    seq: int
    payload: Any


class EventQueue:
    """heapq priority queue ordered by (time, kind, seq).

    Scheduling before the clock is a causality violation; events at or past
    hi_time fall outside the run and are dropped.
    """

    def __init__(self, hi_time: Optional[int] = None):
        self.events: List[SimEvent] = []
        self.now = 0
        self.hi_time = hi_time
        self._seq = 0

    def __len__(self):
        return len(self.events)

    def push(self, time: int, kind: EventKind, payload: Any = None) -> bool:
        if time < self.now:
            raise ProtocolError(f"event {kind.name} scheduled at minute {time}, before the clock ({self.now})")
        if self.hi_time is not None and time >= self.hi_time:
            return False
        heapq.heappush(self.events, SimEvent(time, kind, self._seq, payload))
        self._seq += 1
        return True

    def pop(self) -> Optional[SimEvent]:
        if not self.events:
            return None
        event = heapq.heappop(self.events)
        self.now = event.time
        return event


@dataclass
class MetricsSeries:
    """Per-day records, one row per simulated day"""
    day: np.ndarray
    ev_count: np.ndarray
    new_adopters: np.ndarray
    revenue: np.ndarray
    energy_proxy: np.ndarray
    peak_occupancy: np.ndarray
    rejections: np.ndarray

    @classmethod
    def from_rows(cls, rows: List[tuple]) -> "MetricsSeries":
        columns = list(zip(*rows)) if rows else [()] * len(SERIES_COLUMNS)
        dtypes = (np.int64, np.int64, np.int64, float, float, np.int64, np.int64)
        return cls(*[np.array(col, dtype=dt) for col, dt in zip(columns, dtypes)])

    def __len__(self):
        return len(self.day)

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame({name: getattr(self, name) for name in SERIES_COLUMNS})


@dataclass
class RunResult:
    series: MetricsSeries
    final_ev_count: int
    seed: int
    digest: str


class Simulation:
    """Event loop of one run"""

    def __init__(self, scenario: ScenarioConfig, seed: int):
        self.scenario = scenario
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.calendar = scenario.calendar
        self.params = scenario.adoption

        self.owners = sample_population(scenario.population, self.rng,
                                        adoption_fraction=scenario.adoption.adoption_fraction)
        self.stereotypes = {s.id: s for s in scenario.population.stereotypes}
        n = len(self.owners)
        self.ids = np.arange(n, dtype=np.int64)
        self.states = np.full(n, CommuteState.AT_HOME, dtype=np.int8)
        self.electric = np.zeros(n, dtype=bool)
        self.parked = np.zeros(n, dtype=bool)
        self.category = np.array([CATEGORIES.index(o.original_category) for o in self.owners], dtype=np.int64)
        self.level = np.array([o.staff_level for o in self.owners], dtype=np.int64)
        self.cogency = np.array([o.cogency for o in self.owners], dtype=float)

        self.lot = ParkingLot(scenario.lot_capacity)
        self.queue = EventQueue(hi_time=scenario.horizon_days * MINUTES_PER_DAY)
        self._contact_minutes = {
            workday: contact_minutes(self.calendar, day)
            for workday, day in self._sample_days().items()
        }

        self.ev_count = 0
        self.events_processed = 0
        self.rows: List[tuple] = []
        self._reset_day()

    def _sample_days(self) -> Dict[bool, int]:
        days = {}
        for day in range(7):
            days.setdefault(self.calendar.is_workday(day), day)
        return days

    def _reset_day(self):
        self.day_new_adopters = 0
        self.day_revenue = 0.0
        self.day_energy = 0.0
        self.day_peak = 0
        self.day_rejections = 0

    # -- scheduling -------------------------------------------------------

    def _schedule_day(self, day: int):
        start = day * MINUTES_PER_DAY
        for phase in day_schedule(self.calendar, day):
            self.queue.push(phase.time, EventKind.COMMUTE, (day, phase))

        sources, targets = daily_wom_contacts(np.flatnonzero(self.electric), len(self.owners), self.params, self.rng)
        if len(sources):
            window = self._contact_minutes[self.calendar.is_workday(day)]
            times = start + window[self.rng.integers(0, len(window), size=len(sources))]
            # messages to owners who already drive an EV are never delivered
            keep = ~self.electric[targets]
            for time, source, target in zip(times[keep].tolist(), sources[keep].tolist(), targets[keep].tolist()):
                self.queue.push(time, EventKind.WOM_DELIVERY, (day, source, target))

        self.queue.push(start + TICK_MINUTE, EventKind.METRICS_TICK, day)

    def _schedule_ad(self, owner_id: int):
        gap_days = next_ad_exposure(owner_id, self.params, self.rng)
        minute = self.queue.now + gap_days * MINUTES_PER_DAY
        # also catches gaps that overflow to inf at tiny ad rates
        if not minute < self.queue.hi_time:
            return
        self.queue.push(int(minute), EventKind.AD_EXPOSURE, owner_id)

    # -- handlers ---------------------------------------------------------

    def _on_commute(self, day: int, phase: CommutePhase):
        if not np.all(self.states == phase.from_state):
            raise ProtocolError(f"commute transition {phase.from_state.name}->{phase.to_state.name} "
                                f"on day {day} found owners in another state")
        self.states[:] = phase.to_state

        if phase.action == 'request':
            parked, rejected = request_spaces(self.ids, self.lot)
            self.parked[:] = False
            self.parked[parked] = True
            self.day_rejections += len(rejected)
            self.day_peak = max(self.day_peak, self.lot.occupied_count)
            commuters = CommuterColumns(self.electric, self.category, self.level, self.parked)
            self.day_revenue, self.day_energy = accrue_day(commuters, self.scenario.tariff, self.scenario.energy)
            if len(rejected):
                logger.debug("Day %d: %d owners turned away by a full lot", day, len(rejected))
        elif phase.action == 'release':
            release_spaces(np.flatnonzero(self.parked), self.lot)
            self.parked[:] = False
        self._audit_occupancy()

    def _on_wom(self, day: int, source: int, target: int):
        if self.electric[target]:
            return
        trigger = PurchaseTrigger(TriggerKind.WOM, day, source=source, source_cogency=float(self.cogency[source]))
        self._deliver(target, trigger)

    def _on_ad(self, owner_id: int):
        if self.electric[owner_id]:
            return
        day = self.queue.now // MINUTES_PER_DAY
        adopted = self._deliver(owner_id, PurchaseTrigger(TriggerKind.AD, day))
        if not adopted:
            self._schedule_ad(owner_id)

    def _deliver(self, owner_id: int, trigger: PurchaseTrigger) -> bool:
        owner = self.owners[owner_id]
        adopted = decide_purchase(owner, trigger, self.stereotypes[owner.stereotype_id],
                                  self.scenario.tariff, self.params, self.rng)
        if adopted:
            self.electric[owner_id] = True
            self.ev_count += 1
            self.day_new_adopters += 1
        return adopted

    def _on_tick(self, day: int):
        self._audit_occupancy()
        self.rows.append((day, self.ev_count, self.day_new_adopters, self.day_revenue,
                          self.day_energy, self.day_peak, self.day_rejections))
        self._reset_day()
        if day + 1 < self.scenario.horizon_days:
            self._schedule_day(day + 1)

    def _audit_occupancy(self):
        at_work = np.count_nonzero(self.states == CommuteState.AT_WORK)
        # turned-away owners are AtWork without a space
        expected = at_work - self.day_rejections if at_work else 0
        if self.lot.occupied_count != expected:
            raise ProtocolError(f"{self.lot.occupied_count} spaces occupied but {at_work} owners at work "
                                f"({self.day_rejections} turned away)")
        audit_lot(self.lot, self.ids[self.parked])

    # -- main loop --------------------------------------------------------

    def run(self) -> RunResult:
        if self.scenario.horizon_days > 0:
            for owner in self.owners:
                self._schedule_ad(owner.id)
            self._schedule_day(0)

        while True:
            event = self.queue.pop()
            if event is None:
                break
            self.events_processed += 1
            try:
                self._dispatch(event)
            except ProtocolError as exc:
                day = event.time // MINUTES_PER_DAY
                minute = event.time % MINUTES_PER_DAY
                logger.error("Run aborted at day %d %02d:%02d (%s): %s",
                             day, minute // 60, minute % 60, event.kind.name, exc)
                raise ProtocolError(f"day {day} minute {minute} {event.kind.name} "
                                    f"payload={event.payload!r}: {exc}") from exc

        for owner, state in zip(self.owners, self.states):
            owner.commute_state = CommuteState(int(state))

        series = MetricsSeries.from_rows(self.rows)
        logger.debug("Run seed=%d finished: %d events, %d EVs", self.seed, self.events_processed, self.ev_count)
        return RunResult(series, self.ev_count, self.seed, scenario_digest(self.scenario))

    def _dispatch(self, event: SimEvent):
        if event.kind is EventKind.COMMUTE:
            self._on_commute(*event.payload)
        elif event.kind is EventKind.WOM_DELIVERY:
            self._on_wom(*event.payload)
        elif event.kind is EventKind.AD_EXPOSURE:
            self._on_ad(event.payload)
        else:
            self._on_tick(event.payload)


def run(scenario: ScenarioConfig, seed: int) -> RunResult:
    """Simulate scenario.horizon_days days; deterministic in (scenario, seed)"""
    return Simulation(scenario, seed).run()


def derive_seed(base_seed: int, replication: int) -> int:
    """64-bit seed of replication r, a pure function of (base_seed, r)"""
    state = np.random.SeedSequence([base_seed, replication]).generate_state(1, dtype=np.uint64)
    return int(state[0])


@dataclass
class ReplicationSummary:
    runs: List[RunResult]
    mean: pd.DataFrame
    std: pd.DataFrame

    @property
    def final_counts(self) -> np.ndarray:
        return np.array([r.final_ev_count for r in self.runs], dtype=np.int64)

    def aggregate_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({'day': self.mean['day']})
        for name in METRICS:
            frame[f"{name}_mean"] = self.mean[name]
            frame[f"{name}_std"] = self.std[name]
        return frame


def _run_replication(job):
    scenario, seed, replication = job
    try:
        return run(scenario, seed)
    except SimulationError as exc:
        raise ReplicationError(replication, seed, exc) from exc


def _resolve_workers(workers: Optional[int], n_reps: int) -> int:
    if workers is None:
        workers = int(os.environ.get('SIM_WORKERS', os.cpu_count() or 1))
    return max(1, min(workers, n_reps))


def aggregate(runs: List[RunResult]) -> ReplicationSummary:
    """Per-day mean and population std (ddof=0) of every metric, in replication order"""
    days = runs[0].series.day
    mean = {'day': days}
    std = {'day': days}
    for name in METRICS:
        stacked = np.stack([getattr(r.series, name).astype(float) for r in runs])
        mean[name] = stacked.mean(axis=0)
        std[name] = stacked.std(axis=0)
    return ReplicationSummary(runs, pd.DataFrame(mean), pd.DataFrame(std))


def run_replications(scenario: ScenarioConfig, base_seed: Optional[int] = None,
                     n_reps: Optional[int] = None, workers: Optional[int] = None) -> ReplicationSummary:
    """Run n_reps independent replications and aggregate them.

    Replication r uses derive_seed(base_seed, r), so results do not depend
    on the number of worker processes.
    """
    base_seed = scenario.base_seed if base_seed is None else base_seed
    n_reps = scenario.replications if n_reps is None else n_reps
    if n_reps < 1:
        raise ValueError(f"n_reps must be >= 1, got {n_reps}")

    jobs = [(scenario, derive_seed(base_seed, r), r) for r in range(n_reps)]
    workers = _resolve_workers(workers, n_reps)
    logger.info("Running %d replications (base seed %d, %d worker(s))", n_reps, base_seed, workers)

    runs = None
    if workers > 1:
        try:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                runs = list(pool.map(_run_replication, jobs))
        except (OSError, NotImplementedError, BrokenProcessPool) as exc:
            logger.warning("Process pool unavailable (%s), running replications serially", exc)
    if runs is None:
        runs = [_run_replication(job) for job in jobs]
    return aggregate(runs)

"""
Home-detection heuristics

A heuristic is a metric (activity count or distinct days) restricted to a time
window (all hours, broad night 19:00-09:00, strict night 22:00-06:00) in local
time. The home is the tower maximizing the metric; ties go to the smallest
cell_id. Distinct days are local calendar dates, so a 23:50 -> 00:10 pair
spans two days.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from config import HEURISTIC_NAMES, StudyConfig
from ingest.records import CdrRecord

logger = logging.getLogger(__name__)

METRICS = ('activity_count', 'distinct_days')
WINDOWS = ('all_hours', 'night_broad', 'night_strict')
SECONDS_PER_DAY = 86400


@dataclass(frozen=True)
class HeuristicSpec:
    name: str
    metric: str
    window: str

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"Unknown metric {self.metric!r}; expected one of {METRICS}")
        if self.window not in WINDOWS:
            raise ValueError(f"Unknown window {self.window!r}; expected one of {WINDOWS}")


HEURISTICS: Dict[str, HeuristicSpec] = {
    'H1': HeuristicSpec('H1', 'activity_count', 'all_hours'),
    'H2': HeuristicSpec('H2', 'distinct_days', 'all_hours'),
    'H3': HeuristicSpec('H3', 'activity_count', 'night_broad'),
    'H4': HeuristicSpec('H4', 'distinct_days', 'night_broad'),
    'H5': HeuristicSpec('H5', 'activity_count', 'night_strict'),
}
assert tuple(HEURISTICS) == HEURISTIC_NAMES


def resolve_heuristics(names) -> List[HeuristicSpec]:
    """Map 'all', a comma list or a sequence of names onto HeuristicSpecs"""
    if isinstance(names, str):
        names = list(HEURISTICS) if names.strip().lower() == 'all' else \
            [n.strip() for n in names.split(',') if n.strip()]
    specs = []
    for name in names:
        if name not in HEURISTICS:
            raise ValueError(f"Unknown heuristic {name!r}; available: {list(HEURISTICS)}")
        specs.append(HEURISTICS[name])
    return specs


@dataclass(frozen=True)
class HomeAssignment:
    user_id: str
    heuristic: str
    home_cell: Optional[str]
    score: float
    tie_broken: bool
    qualifies: bool

    def to_row(self) -> tuple:
        return (self.user_id, self.heuristic, self.home_cell if self.home_cell is not None else '',
                self.score, self.tie_broken, self.qualifies)


ASSIGNMENT_COLUMNS = ['user_id', 'heuristic', 'home_cell', 'score', 'tie_broken', 'qualifies']


class UserActivity:
    """One user's events, sorted and encoded once for all heuristics"""

    def __init__(self, events: Sequence[CdrRecord], config: StudyConfig, user_id: Optional[str] = None):
        users = {e.user_id for e in events}
        if len(users) > 1:
            raise ValueError(f"Events of several users passed to home detection: {sorted(users)[:3]}")
        self.user_id = user_id if user_id is not None else (users.pop() if users else '')
        self.config = config

        ordered = sorted(events, key=lambda e: (e.timestamp, e.cell_id))
        self.n_events = len(ordered)
        timestamps = np.fromiter((e.timestamp for e in ordered), dtype=np.int64, count=len(ordered))
        local = timestamps + config.offset_seconds
        self.local_seconds = np.mod(local, SECONDS_PER_DAY)
        self.local_days = np.floor_divide(local, SECONDS_PER_DAY)
        if ordered:
            self.cell_ids, self.codes = np.unique(np.array([e.cell_id for e in ordered]),
                                                  return_inverse=True)
        else:
            self.cell_ids, self.codes = np.array([], dtype=str), np.array([], dtype=np.int64)
        self.codes = np.asarray(self.codes).reshape(-1)

    @property
    def active_days(self) -> int:
        return int(len(np.unique(self.local_days)))

    @property
    def qualifies(self) -> bool:
        return self.n_events >= self.config.min_events and self.active_days >= self.config.min_active_days

    def window_mask(self, window: str) -> np.ndarray:
        if window == 'all_hours':
            return np.ones(self.n_events, dtype=bool)
        lo, hi = getattr(self.config, window)
        lo_s, hi_s = lo * 3600.0, hi * 3600.0
        if lo > hi:
            return (self.local_seconds >= lo_s) | (self.local_seconds < hi_s)
        return (self.local_seconds >= lo_s) & (self.local_seconds < hi_s)

    def scores(self, spec: HeuristicSpec) -> np.ndarray:
        """Metric value per visited tower (aligned with ``cell_ids``) inside the window"""
        k = len(self.cell_ids)
        mask = self.window_mask(spec.window)
        codes = self.codes[mask]
        if spec.metric == 'activity_count':
            return np.bincount(codes, minlength=k).astype(float)
        days = self.local_days[mask]
        if len(days) == 0:
            return np.zeros(k, dtype=float)
        span = int(days.max() - days.min()) + 1
        pairs = np.unique(codes.astype(np.int64) * span + (days - days.min()))
        return np.bincount(pairs // span, minlength=k).astype(float)

    def detect(self, spec: HeuristicSpec) -> HomeAssignment:
        qualifies = self.qualifies
        if self.n_events == 0:
            return HomeAssignment(self.user_id, spec.name, None, 0.0, False, False)
        scores = self.scores(spec)
        best = scores.max()
        if best <= 0:
            return HomeAssignment(self.user_id, spec.name, None, 0.0, False, qualifies)
        tied = np.flatnonzero(scores == best)
        # cell_ids are sorted, so the first tied index is the smallest cell_id
        return HomeAssignment(self.user_id, spec.name, str(self.cell_ids[tied[0]]), float(best),
                              bool(len(tied) > 1), qualifies)


def detect_homes(events: Sequence[CdrRecord], specs: Iterable[HeuristicSpec], config: StudyConfig,
                 user_id: Optional[str] = None) -> List[HomeAssignment]:
    """Run several heuristics over one user's events, preparing the events once"""
    activity = UserActivity(events, config, user_id=user_id)
    return [activity.detect(spec) for spec in specs]


def detect_home(events: Sequence[CdrRecord], spec: HeuristicSpec, config: StudyConfig,
                user_id: Optional[str] = None) -> HomeAssignment:
    """
    Detect one user's home tower under one heuristic

    Args:
        events: the user's in-window events (any order; re-sorted internally)
        spec: heuristic to apply
        config: study configuration (local-time offset, night windows, thresholds)
        user_id: user id to report when ``events`` is empty

    Returns:
        HomeAssignment; home_cell is None when no event falls in the heuristic's window
    """
    return detect_homes(events, [spec], config, user_id=user_id)[0]

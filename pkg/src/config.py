"""
Configuration settings for the CDR veracity toolkit

Defaults live in the section dictionaries below. A run merges them with one
declarative INI file (``key = value`` under ``[section]`` headers) and then with
command-line overrides: flags > file > defaults.
"""

import configparser
import copy
import os
import re
from dataclasses import dataclass, replace
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

from errors import ConfigError

# Project paths
PROJECT_ROOT = Path(__file__).parent.parent
SRC_DIR = PROJECT_ROOT / "src"

HEURISTIC_NAMES = ('H1', 'H2', 'H3', 'H4', 'H5')
STANDARD_LEVELS = ('cell', 'iris', 'commune')

# Study window and user filter
STUDY_SETTINGS = {
    'start': '2007-06-01T00:00:00Z',
    'end': '2007-07-01T00:00:00Z',
    'utc_offset_hours': 2.0,        # fixed offset for night windows (French summer time)
    'night_broad': '19-9',
    'night_strict': '22-6',
    'min_events': 10,
    'min_active_days': 5,
    'projection_origin': '',        # "lon,lat"; empty = tower centroid
    'period_granularity': 'month',  # month | week | day | none; slices of the period validation series
}

# Input files, resolved against data_dir (empty = --out-dir)
INPUT_SETTINGS = {
    'data_dir': '',
    'cdr': 'cdr.csv',
    'towers': 'towers.csv',
    'census': 'census_cell.csv',
    'census_pattern': 'census_{level}.csv',
    'admin': 'admin.geojson',
    'admin_coordinates': 'lonlat',  # lonlat | planar
    'assume_sorted': True,          # CDR file grouped by user -> streaming detection
}

GEOMETRY_SETTINGS = {
    'padding_fraction': 0.1,
    'min_padding_m': 1000.0,        # used when the tower extent is zero along an axis
}

HOME_DETECTION_SETTINGS = {
    'heuristics': ','.join(HEURISTIC_NAMES),
    'primary': 'H3',
}

INDICATOR_SETTINGS = {
    'home_heuristic': 'H3',
    'bins': 10,
    'min_users': 50,
}

SPATIAL_STATS_SETTINGS = {
    'z_crit': 1.645,
}

SCALES_SETTINGS = {
    'levels': ','.join(STANDARD_LEVELS),
    'delta_threshold': 0.2,
    'count_heuristic': 'H2',        # distinct-days detection, compared against census
    'reference_attribute': 'EDI',
    'methods': '',                  # variable:method overrides, e.g. EDI:mean; sum only for counts
}

PIPELINE_SETTINGS = {
    'workers': 1,
    'chunk_users': 2000,
    'progress': True,
}

SYNTH_SETTINGS = {
    'seed': 42,
    'extent_km': 40.0,
    'n_towers': 400,
    'urban_intensity_ratio': 4.0,
    'urban_radius_km': 8.0,
    'n_users': 2000,
    'days': 30,
    'events_per_day': 6.0,
    'p_home_night': 0.95,
    'p_home_day': 0.3,
    'p_work_day': 0.5,
    'work_distance_km': 5.0,
    'nearby_towers': 6,
    'communes_per_side': 4,
    'iris_per_commune_side': 3,
    'origin_lon': 2.35,
    'origin_lat': 48.85,
    'home_unit': '',
}

LOGGING_CONFIG = {
    'level': 'INFO',
    'log_file': '',
}

DEFAULT_CONFIG = {
    'study': STUDY_SETTINGS,
    'inputs': INPUT_SETTINGS,
    'geometry': GEOMETRY_SETTINGS,
    'home_detection': HOME_DETECTION_SETTINGS,
    'indicators': INDICATOR_SETTINGS,
    'spatial_stats': SPATIAL_STATS_SETTINGS,
    'scales': SCALES_SETTINGS,
    'pipeline': PIPELINE_SETTINGS,
    'synth': SYNTH_SETTINGS,
    'logging': LOGGING_CONFIG,
}

_TRUE = {'1', 'true', 'yes', 'on'}
_FALSE = {'0', 'false', 'no', 'off'}


def _coerce(section: str, key: str, value: Any, default: Any) -> Any:
    if not isinstance(value, str) or isinstance(default, str):
        if isinstance(default, bool) and not isinstance(value, bool):
            raise ConfigError(f"[{section}] {key}: expected a boolean, got {value!r}")
        if isinstance(default, str):
            return str(value)
        if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
            return float(value)
        return value
    text = value.strip()
    try:
        if isinstance(default, bool):
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {value!r} as "
                          f"{type(default).__name__}") from None
    return text


def load_config(path=None, overrides: Optional[Mapping[str, Mapping[str, Any]]] = None
                ) -> Dict[str, Dict[str, Any]]:
    """
    Merge defaults, an optional INI file and flag overrides

    Args:
        path: INI file path (optional)
        overrides: section -> key -> value, applied last (None values are skipped)

    Returns:
        Validated settings dictionary (section -> key -> typed value)
    """
    settings = copy.deepcopy(DEFAULT_CONFIG)

    if path:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Configuration file not found: {path}")
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=('#', ';'))
        try:
            parser.read(path, encoding='utf-8')
        except configparser.Error as e:
            raise ConfigError(f"Cannot parse configuration file {path}: {e}") from e
        for section in parser.sections():
            if section not in settings:
                raise ConfigError(f"Unknown configuration section [{section}] in {path}")
            for key, value in parser.items(section):
                if key not in settings[section]:
                    raise ConfigError(f"Unknown configuration key [{section}] {key} in {path}")
                settings[section][key] = _coerce(section, key, value, DEFAULT_CONFIG[section][key])

    for section, values in (overrides or {}).items():
        if section not in settings:
            raise ConfigError(f"Unknown configuration section [{section}]")
        for key, value in values.items():
            if value is None:
                continue
            if key not in settings[section]:
                raise ConfigError(f"Unknown configuration key [{section}] {key}")
            settings[section][key] = _coerce(section, key, value, DEFAULT_CONFIG[section][key])

    load_environment_config(settings)
    validate_config(settings)
    return settings


def load_environment_config(settings: Dict[str, Dict[str, Any]]) -> Dict[str, Dict[str, Any]]:
    """Apply environment overrides (CDR_DEBUG, CDR_WORKERS)"""
    if os.getenv('CDR_DEBUG'):
        settings['logging']['level'] = 'DEBUG'

    if os.getenv('CDR_WORKERS'):
        settings['pipeline']['workers'] = _coerce('pipeline', 'workers', os.getenv('CDR_WORKERS'), 1)

    return settings


def write_config(settings: Mapping[str, Mapping[str, Any]], path) -> Path:
    """Write settings back out as an INI file"""
    parser = configparser.ConfigParser(interpolation=None)
    for section in sorted(settings):
        parser[section] = {key: _format_value(value) for key, value in settings[section].items()}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as handle:
        parser.write(handle)
    return path


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def split_list(value: str) -> Tuple[str, ...]:
    return tuple(item.strip() for item in str(value).split(',') if item.strip())


# Time helpers

def parse_instant(text: str) -> datetime:
    """Parse an ISO-8601 date or datetime; naive values are taken as UTC"""
    text = str(text).strip()
    try:
        if re.fullmatch(r'\d{4}-\d{2}-\d{2}', text):
            parsed = datetime.combine(date.fromisoformat(text), datetime.min.time())
        else:
            parsed = datetime.fromisoformat(text.replace('Z', '+00:00'))
    except ValueError:
        raise ConfigError(f"Invalid date/time: {text!r}") from None
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.astimezone(timezone.utc)


def parse_period(text: str) -> Tuple[datetime, datetime]:
    """Parse a ``START..END`` period flag"""
    if '..' not in str(text):
        raise ConfigError(f"Invalid period {text!r}: expected START..END")
    start, end = str(text).split('..', 1)
    start_dt, end_dt = parse_instant(start), parse_instant(end)
    if end_dt <= start_dt:
        raise ConfigError(f"Invalid period {text!r}: end must be after start")
    return start_dt, end_dt


def parse_hour_window(text: str) -> Tuple[float, float]:
    """Parse ``HH[:MM]-HH[:MM]`` into (start_hour, end_hour); the window may wrap midnight"""
    match = re.fullmatch(r'\s*(\d{1,2})(?::(\d{2}))?\s*-\s*(\d{1,2})(?::(\d{2}))?\s*', str(text))
    if not match:
        raise ConfigError(f"Invalid hour window {text!r}: expected HH[:MM]-HH[:MM]")
    start = int(match.group(1)) + int(match.group(2) or 0) / 60.0
    end = int(match.group(3)) + int(match.group(4) or 0) / 60.0
    return start, end


def parse_origin(text: str) -> Optional[Tuple[float, float]]:
    if not str(text).strip():
        return None
    parts = split_list(text)
    if len(parts) != 2:
        raise ConfigError(f"Invalid projection_origin {text!r}: expected 'lon,lat'")
    try:
        lon, lat = float(parts[0]), float(parts[1])
    except ValueError:
        raise ConfigError(f"Invalid projection_origin {text!r}") from None
    return lon, lat


def month_periods(start: datetime, end: datetime):
    """Yield consecutive calendar-month (start, end) slices covering [start, end)"""
    current = start
    while current < end:
        if current.month == 12:
            nxt = current.replace(year=current.year + 1, month=1, day=1, hour=0, minute=0,
                                  second=0, microsecond=0)
        else:
            nxt = current.replace(month=current.month + 1, day=1, hour=0, minute=0,
                                  second=0, microsecond=0)
        yield current, min(nxt, end)
        current = nxt


PERIOD_GRANULARITIES = ('month', 'week', 'day', 'none')
PERIOD_STEPS = {'week': timedelta(weeks=1), 'day': timedelta(days=1)}


def period_slices(start: datetime, end: datetime, granularity: str):
    """
    Yield (label, start, end) slices covering [start, end)

    Months follow the calendar, weeks and days are fixed steps from start,
    and 'none' yields the whole window as one slice labelled 'all'.
    """
    if granularity == 'none':
        yield 'all', start, end
    elif granularity == 'month':
        for lo, hi in month_periods(start, end):
            yield lo.strftime('%Y-%m'), lo, hi
    elif granularity in PERIOD_STEPS:
        step, current = PERIOD_STEPS[granularity], start
        while current < end:
            yield current.strftime('%Y-%m-%d'), current, min(current + step, end)
            current += step
    else:
        raise ConfigError(f"Unknown period_granularity: {granularity}")


@dataclass(frozen=True)
class StudyConfig:
    """Study window, local-time convention and user filter shared by ingest and detection"""
    start: datetime
    end: datetime
    utc_offset_hours: float = 2.0
    night_broad: Tuple[float, float] = (19.0, 9.0)
    night_strict: Tuple[float, float] = (22.0, 6.0)
    min_events: int = 10
    min_active_days: int = 5
    projection_origin: Optional[Tuple[float, float]] = None
    period_granularity: str = 'month'

    def __post_init__(self):
        if self.end <= self.start:
            raise ConfigError("Study window end must be after start")
        if self.min_events < 1 or self.min_active_days < 1:
            raise ConfigError("min_events and min_active_days must be >= 1")
        for name in ('night_broad', 'night_strict'):
            lo, hi = getattr(self, name)
            if not (0 <= lo < 24 and 0 <= hi < 24) or lo == hi:
                raise ConfigError(f"Invalid {name} window: {lo}-{hi}")

    @property
    def start_ts(self) -> int:
        return int(self.start.timestamp())

    @property
    def end_ts(self) -> int:
        return int(self.end.timestamp())

    @property
    def offset_seconds(self) -> int:
        return int(round(self.utc_offset_hours * 3600))

    def contains(self, ts: int) -> bool:
        return self.start_ts <= ts < self.end_ts

    def restricted_to(self, start: datetime, end: datetime) -> 'StudyConfig':
        """Narrow the window to a period; the period must overlap the study window"""
        new_start, new_end = max(self.start, start), min(self.end, end)
        if new_end <= new_start:
            raise ConfigError(f"Period {start.isoformat()}..{end.isoformat()} does not overlap "
                              f"the study window")
        return replace(self, start=new_start, end=new_end)

    def days(self) -> int:
        return int((self.end - self.start) / timedelta(days=1))

    def periods(self) -> List[Tuple[str, datetime, datetime]]:
        """The study window cut at period_granularity"""
        return list(period_slices(self.start, self.end, self.period_granularity))

    @classmethod
    def from_settings(cls, settings: Mapping[str, Mapping[str, Any]]) -> 'StudyConfig':
        study = settings['study']
        return cls(
            start=parse_instant(study['start']),
            end=parse_instant(study['end']),
            utc_offset_hours=float(study['utc_offset_hours']),
            night_broad=parse_hour_window(study['night_broad']),
            night_strict=parse_hour_window(study['night_strict']),
            min_events=int(study['min_events']),
            min_active_days=int(study['min_active_days']),
            projection_origin=parse_origin(study['projection_origin']),
            period_granularity=str(study['period_granularity']),
        )


def validate_config(settings: Mapping[str, Mapping[str, Any]]) -> bool:
    """Validate configuration settings, reporting every problem at once"""
    errors = []

    try:
        StudyConfig.from_settings(settings)
    except ConfigError as e:
        errors.append(str(e))

    if not -14 <= settings['study']['utc_offset_hours'] <= 14:
        errors.append("utc_offset_hours must lie in [-14, 14]")
    if settings['study']['period_granularity'] not in PERIOD_GRANULARITIES:
        errors.append(f"Unknown period_granularity: {settings['study']['period_granularity']}")

    if settings['inputs']['admin_coordinates'] not in ('lonlat', 'planar'):
        errors.append("admin_coordinates must be 'lonlat' or 'planar'")
    if '{level}' not in settings['inputs']['census_pattern']:
        errors.append("census_pattern must contain '{level}'")

    if settings['geometry']['padding_fraction'] < 0:
        errors.append("padding_fraction must be >= 0")
    if settings['geometry']['min_padding_m'] <= 0:
        errors.append("min_padding_m must be > 0")

    heuristics = split_list(settings['home_detection']['heuristics'])
    if not heuristics:
        errors.append("At least one home-detection heuristic is required")
    for name in heuristics + (settings['home_detection']['primary'],
                              settings['indicators']['home_heuristic'],
                              settings['scales']['count_heuristic']):
        if name not in HEURISTIC_NAMES:
            errors.append(f"Unknown heuristic: {name}")

    if settings['indicators']['bins'] < 1:
        errors.append("bins must be >= 1")
    if settings['indicators']['min_users'] < 1:
        errors.append("min_users must be >= 1")
    if settings['spatial_stats']['z_crit'] <= 0:
        errors.append("z_crit must be > 0")

    levels = split_list(settings['scales']['levels'])
    if not levels or levels[0] != 'cell':
        errors.append("scales levels must start with 'cell'")
    if len(set(levels)) != len(levels):
        errors.append("scales levels must be unique")
    if settings['scales']['delta_threshold'] < 0:
        errors.append("delta_threshold must be >= 0")

    if settings['pipeline']['workers'] < 1:
        errors.append("workers must be >= 1")
    if settings['pipeline']['chunk_users'] < 1:
        errors.append("chunk_users must be >= 1")

    synth = settings['synth']
    for key in ('p_home_night', 'p_home_day', 'p_work_day'):
        if not 0.0 <= synth[key] <= 1.0:
            errors.append(f"synth {key} must lie in [0, 1]")
    if synth['p_home_day'] + synth['p_work_day'] > 1.0:
        errors.append("synth p_home_day + p_work_day must be <= 1")
    for key in ('n_towers', 'n_users', 'communes_per_side', 'iris_per_commune_side',
                'nearby_towers'):
        if synth[key] < 1:
            errors.append(f"synth {key} must be >= 1")
    if synth['days'] < 0:
        errors.append("synth days must be >= 0")
    for key in ('extent_km', 'urban_radius_km', 'urban_intensity_ratio', 'work_distance_km'):
        if synth[key] <= 0:
            errors.append(f"synth {key} must be > 0")
    if synth['events_per_day'] < 0:
        errors.append("synth events_per_day must be >= 0")

    if errors:
        raise ConfigError("Configuration validation failed:\n" + "\n".join(errors))

    return True


__all__ = [
    'PROJECT_ROOT', 'SRC_DIR', 'HEURISTIC_NAMES', 'STANDARD_LEVELS',
    'STUDY_SETTINGS', 'INPUT_SETTINGS', 'GEOMETRY_SETTINGS', 'HOME_DETECTION_SETTINGS',
    'INDICATOR_SETTINGS', 'SPATIAL_STATS_SETTINGS', 'SCALES_SETTINGS', 'PIPELINE_SETTINGS',
    'SYNTH_SETTINGS', 'LOGGING_CONFIG', 'DEFAULT_CONFIG', 'StudyConfig', 'load_config',
    'validate_config', 'write_config', 'parse_period', 'parse_instant', 'split_list',
    'month_periods', 'period_slices', 'PERIOD_GRANULARITIES',
]

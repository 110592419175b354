from datetime import datetime, timezone

import pytest

from config import (DEFAULT_CONFIG, StudyConfig, load_config, month_periods, parse_hour_window, parse_instant,
                    parse_period, period_slices, write_config)
from errors import ConfigError


def utc(*args):
    return datetime(*args, tzinfo=timezone.utc)


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    monkeypatch.delenv('CDR_DEBUG', raising=False)
    monkeypatch.delenv('CDR_WORKERS', raising=False)


class TestLoadConfig:
    def test_defaults(self):
        settings = load_config()
        assert settings == DEFAULT_CONFIG
        assert settings is not DEFAULT_CONFIG

    def test_flags_override_file(self, tmp_path):
        path = tmp_path / 'study.ini'
        path.write_text('[pipeline]\nworkers = 3\nchunk_users = 10  # small\n\n[scales]\ndelta_threshold = 0.3\n')
        settings = load_config(path, {'pipeline': {'workers': 2, 'progress': None}})
        assert settings['pipeline']['workers'] == 2
        assert settings['pipeline']['chunk_users'] == 10
        assert settings['pipeline']['progress'] is True
        assert settings['scales']['delta_threshold'] == 0.3

    def test_written_file_reloads(self, tmp_path):
        settings = load_config(None, {'study': {'utc_offset_hours': 1}, 'inputs': {'assume_sorted': False}})
        assert load_config(write_config(settings, tmp_path / 'out.ini')) == settings

    def test_environment(self, monkeypatch):
        monkeypatch.setenv('CDR_WORKERS', '6')
        monkeypatch.setenv('CDR_DEBUG', '1')
        settings = load_config()
        assert settings['pipeline']['workers'] == 6
        assert settings['logging']['level'] == 'DEBUG'

    @pytest.mark.parametrize('text', ['[nosuch]\nkey = 1\n', '[inputs]\nassume_sorted = maybe\n',
                                      '[study]\nnight_broad = 7pm-9am\n', '[scales]\nlevels = iris,commune\n',
                                      '[study]\nperiod_granularity = fortnight\n'])
    def test_rejected_files(self, tmp_path, text):
        path = tmp_path / 'bad.ini'
        path.write_text(text)
        with pytest.raises(ConfigError):
            load_config(path)

    def test_all_problems_reported(self):
        with pytest.raises(ConfigError) as info:
            load_config(None, {'indicators': {'bins': 0, 'min_users': 0}})
        assert 'bins' in str(info.value) and 'min_users' in str(info.value)


class TestTimeHelpers:
    def test_instants_are_utc(self):
        assert parse_instant('2007-06-01') == utc(2007, 6, 1)
        assert parse_instant('2007-06-01T02:00:00+02:00') == utc(2007, 6, 1)
        assert parse_instant('2007-06-01T00:00:00Z') == utc(2007, 6, 1)

    def test_period(self):
        assert parse_period('2007-06-01..2007-06-08') == (utc(2007, 6, 1), utc(2007, 6, 8))
        for text in ('2007-06-01', '2007-06-08..2007-06-01', 'june..july'):
            with pytest.raises(ConfigError):
                parse_period(text)

    def test_hour_window(self):
        assert parse_hour_window('19-9') == (19.0, 9.0)
        assert parse_hour_window('22:30-06:15') == (22.5, 6.25)

    def test_month_periods(self):
        assert list(month_periods(utc(2007, 6, 15), utc(2007, 8, 10))) == [
            (utc(2007, 6, 15), utc(2007, 7, 1)),
            (utc(2007, 7, 1), utc(2007, 8, 1)),
            (utc(2007, 8, 1), utc(2007, 8, 10)),
        ]

    def test_month_periods_cross_year(self):
        periods = list(month_periods(utc(2007, 12, 1), utc(2008, 2, 1)))
        assert [p[0].month for p in periods] == [12, 1]

    def test_period_slices(self):
        start, end = utc(2007, 6, 1), utc(2007, 6, 17)
        weeks = list(period_slices(start, end, 'week'))
        assert [w[0] for w in weeks] == ['2007-06-01', '2007-06-08', '2007-06-15']
        assert weeks[-1][1:] == (utc(2007, 6, 15), end)
        assert len(list(period_slices(start, end, 'day'))) == 16
        assert list(period_slices(start, end, 'none')) == [('all', start, end)]
        assert [m[0] for m in period_slices(utc(2007, 6, 15), utc(2007, 8, 2), 'month')] == [
            '2007-06', '2007-07', '2007-08']
        with pytest.raises(ConfigError):
            list(period_slices(start, end, 'fortnight'))


class TestStudyConfig:
    def test_from_defaults(self):
        study = StudyConfig.from_settings(load_config())
        assert study.days() == 30
        assert study.offset_seconds == 7200
        assert study.night_strict == (22.0, 6.0)
        assert study.contains(study.start_ts) and not study.contains(study.end_ts)

    def test_restricted_to(self):
        study = StudyConfig.from_settings(load_config())
        week = study.restricted_to(utc(2007, 5, 28), utc(2007, 6, 8))
        assert (week.start, week.end) == (utc(2007, 6, 1), utc(2007, 6, 8))
        assert week.min_events == study.min_events

    def test_periods_follow_granularity(self):
        study = StudyConfig.from_settings(load_config(None, {'study': {'period_granularity': 'week'}}))
        periods = study.periods()
        assert len(periods) == 5
        assert periods[0][1] == study.start and periods[-1][2] == study.end
        assert all(a[2] == b[1] for a, b in zip(periods, periods[1:]))
        assert len(StudyConfig.from_settings(load_config()).periods()) == 1

    def test_restricted_outside_window(self):
        study = StudyConfig.from_settings(load_config())
        with pytest.raises(ConfigError, match='overlap'):
            study.restricted_to(utc(2007, 8, 1), utc(2007, 9, 1))

    def test_invalid(self):
        with pytest.raises(ConfigError):
            StudyConfig(start=utc(2007, 6, 2), end=utc(2007, 6, 1))
        with pytest.raises(ConfigError):
            StudyConfig(start=utc(2007, 6, 1), end=utc(2007, 6, 2), night_broad=(9.0, 9.0))

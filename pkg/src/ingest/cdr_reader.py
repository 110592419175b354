"""
Streaming CDR reader

Every data line becomes either a CdrRecord or a reject with a reason code, so
lines_read == accepted + rejected for any input. Memory is bounded by the
caller's per-user state, never by the file size.
"""

import csv
import functools
import logging
from collections import defaultdict
from datetime import datetime, timezone
from typing import Dict, Iterable, Iterator, List, Optional, TextIO, Tuple

from config import StudyConfig
from errors import IngestError
from ingest.records import CdrRecord, RejectLog, TowerRegistry

logger = logging.getLogger(__name__)

CDR_HEADER = ['user_id', 'timestamp', 'cell_id']


def _zoned_epoch(text: str) -> Optional[int]:
    if text.endswith('Z') or text.endswith('z'):
        text = text[:-1] + '+00:00'
    try:
        parsed = datetime.fromisoformat(text)
    except ValueError:
        return None
    if parsed.tzinfo is None:
        return None
    return int(parsed.astimezone(timezone.utc).timestamp())


@functools.lru_cache(maxsize=1 << 16)
def _hour_epoch(prefix: str) -> Optional[int]:
    """Epoch seconds of a ``YYYY-MM-DDTHH`` prefix read as UTC"""
    return _zoned_epoch(prefix + ':00:00Z')


@functools.lru_cache(maxsize=1024)
def _offset_seconds(suffix: str) -> Optional[int]:
    """UTC offset of a zone suffix (``Z``, ``+02:00``, ...) in seconds"""
    midnight = _zoned_epoch('2000-01-01T00:00:00' + suffix)
    return None if midnight is None else 946684800 - midnight


def parse_timestamp(text: str) -> Optional[int]:
    """
    Parse an ISO-8601 instant with an explicit offset into UTC epoch seconds

    Whole-second stamps (``YYYY-MM-DDTHH:MM:SS`` plus a zone) are decoded from
    cached hour and offset values; anything else goes through fromisoformat.

    Returns:
        Epoch seconds, or None when the text is not a valid zoned timestamp
    """
    text = text.strip()
    if len(text) >= 20 and text[13] == ':' and text[16] == ':' and text[19] in 'Zz+-':
        minutes, seconds = text[14:16], text[17:19]
        if (minutes.isascii() and minutes.isdigit() and seconds.isascii() and seconds.isdigit()
                and minutes < '60' and seconds < '60' and text[11:13] < '24'):
            hour = _hour_epoch(text[:13])
            offset = _offset_seconds(text[19:])
            if hour is not None and offset is not None:
                return hour + int(minutes) * 60 + int(seconds) - offset
            return None
    if not text:
        return None
    return _zoned_epoch(text)


def check_header(row: Optional[List[str]], expected: List[str], source: str) -> None:
    if row is None:
        raise IngestError(f"{source}: empty file, header {','.join(expected)} required")
    cleaned = [cell.strip().lstrip('\ufeff') for cell in row]
    if cleaned != expected:
        raise IngestError(f"{source}: expected header {','.join(expected)}, got {','.join(row)}")


def iter_cdr(stream: TextIO, registry: TowerRegistry, config: StudyConfig,
             rejects: RejectLog) -> Iterator[CdrRecord]:
    """
    Stream CdrRecords out of a ``user_id,timestamp,cell_id`` CSV

    Args:
        stream: text stream positioned at the header line
        registry: tower registry; unknown cells are rejected
        config: study configuration; events outside the window are rejected
        rejects: reject log receiving bad lines and the line counters

    Yields:
        Valid records in file order
    """
    reader = csv.reader(stream)
    try:
        header = next(reader, None)
    except (OSError, UnicodeDecodeError, csv.Error) as e:
        raise IngestError(f"{rejects.source or 'CDR stream'}: unreadable ({e})") from e
    check_header(header, CDR_HEADER, rejects.source or 'CDR stream')

    start_ts, end_ts = config.start_ts, config.end_ts
    entries = registry.entries

    while True:
        try:
            row = next(reader)
        except StopIteration:
            break
        except csv.Error as e:
            rejects.lines_read += 1
            rejects.add(reader.line_num, 'malformed', str(e))
            continue
        except (OSError, UnicodeDecodeError) as e:
            raise IngestError(f"{rejects.source or 'CDR stream'}: unreadable at line "
                              f"{reader.line_num + 1} ({e})") from e

        rejects.lines_read += 1
        if len(row) != 3:
            rejects.add(reader.line_num, 'malformed', ','.join(row))
            continue
        user_id, cell_id = row[0].strip(), row[2].strip()
        if not user_id or not cell_id:
            reason = 'malformed'
        elif (ts := parse_timestamp(row[1])) is None:
            reason = 'bad_timestamp'
        elif cell_id not in entries:
            reason = 'unknown_cell'
        elif not start_ts <= ts < end_ts:
            reason = 'out_of_window'
        else:
            rejects.accepted += 1
            yield CdrRecord(user_id, ts, cell_id)
            continue
        rejects.add(reader.line_num, reason, ','.join(row))


def parse_cdr(stream: TextIO, registry: TowerRegistry, config: StudyConfig,
              source: str = '') -> Tuple[List[CdrRecord], RejectLog]:
    """Materialize iter_cdr: (records in file order, reject log)"""
    rejects = RejectLog(source)
    records = list(iter_cdr(stream, registry, config, rejects))
    logger.info(f"Parsed CDR {source or 'stream'}: {rejects.lines_read} lines, "
                f"{rejects.accepted} records, {rejects.rejected} rejects {rejects.counts()}")
    return records, rejects


def iter_user_events(records: Iterable[CdrRecord]) -> Iterator[Tuple[str, List[CdrRecord]]]:
    """
    Group a user-contiguous record stream into (user_id, events) with one user in memory

    Raises:
        IngestError: when a user reappears after its block has closed
    """
    closed = set()
    current_user = None
    buffer: List[CdrRecord] = []
    for record in records:
        if record.user_id != current_user:
            if current_user is not None:
                closed.add(current_user)
                yield current_user, buffer
            if record.user_id in closed:
                raise IngestError(f"CDR stream is not grouped by user: {record.user_id} reappears")
            current_user = record.user_id
            buffer = []
        buffer.append(record)
    if current_user is not None:
        yield current_user, buffer


def group_by_user(records: Iterable[CdrRecord]) -> Dict[str, List[CdrRecord]]:
    """In-memory grouping for unsorted inputs, keyed and ordered by user_id"""
    grouped: Dict[str, List[CdrRecord]] = defaultdict(list)
    for record in records:
        grouped[record.user_id].append(record)
    return {user: grouped[user] for user in sorted(grouped)}

#!/usr/bin/env python3
"""
Period validation series
Runs the cosine validation once per slice of the study window, cut at the
configured period_granularity (calendar months by default), and collects the
angles into one table
"""

import os
import sys
import argparse
import time
from pathlib import Path

import pandas as pd

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'src'))

from config import PERIOD_GRANULARITIES, StudyConfig, load_config  # noqa: E402
from errors import VeracityError  # noqa: E402
from pipeline import CdrPipeline  # noqa: E402
from utils.logger import setup_logger  # noqa: E402


def run_periods(settings, data_dir: Path, out_dir: Path) -> pd.DataFrame:
    """One cosine validation per period slice; returns the concatenated cosine tables"""
    frames = []
    for label, start, end in StudyConfig.from_settings(settings).periods():
        print(f"📅 {label}")
        pipeline = CdrPipeline(settings, out_dir=out_dir / label, data_dir=data_dir, period=(start, end))
        try:
            pipeline.run('validate', kind='cosine')
        except VeracityError as e:
            print(f"   ⚠️  skipped: {e}")
            continue
        frame = pd.read_csv(out_dir / label / 'cosine.csv')
        frame.insert(0, 'slice', label)
        frames.append(frame)
        for row in frame.itertuples():
            print(f"   {row.heuristic} @ {row.level}: {row.angle_deg:.2f}° ({row.n_units} units)")
    if not frames:
        return pd.DataFrame(columns=['slice', 'period', 'heuristic', 'level', 'angle_deg', 'n_units'])
    return pd.concat(frames, ignore_index=True)


def main():
    parser = argparse.ArgumentParser(description="Cosine validation for every slice of the study window")
    parser.add_argument('--config', type=str, help='INI configuration file')
    parser.add_argument('--data-dir', type=str, default='output', help='Directory holding the inputs')
    parser.add_argument('--out-dir', type=str, default='periods', help='Directory for the per-slice results')
    parser.add_argument('--granularity', choices=PERIOD_GRANULARITIES,
                        help='Override [study] period_granularity')
    parser.add_argument('--verbose', '-v', action='store_true', help='Enable verbose logging')
    args = parser.parse_args()

    setup_logger(level="DEBUG" if args.verbose else "WARNING")
    print("📡 CDR Veracity Toolkit - period validation series")
    print()

    start_time = time.time()
    overrides = {'study': {'period_granularity': args.granularity}} if args.granularity else None
    try:
        settings = load_config(args.config, overrides)
    except VeracityError as e:
        print(f"❌ {e}")
        return 2

    out_dir = Path(args.out_dir)
    series = run_periods(settings, Path(args.data_dir), out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    series.to_csv(out_dir / 'period_cosine.csv', index=False, lineterminator='\n')

    print(f"\n✅ {series['slice'].nunique()} slices validated "
          f"({settings['study']['period_granularity']})")
    print(f"⏱️  Total time: {time.time() - start_time:.2f} seconds")
    print(f"💾 Saved to: {out_dir / 'period_cosine.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

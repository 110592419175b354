"""
Main entry point for the CDR veracity toolkit
Home detection, mobility indicators and multi-scale validation against census data
"""

import os
import sys
import argparse
import logging
from typing import Any, Dict, List, Optional

# Add src to path for imports
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from config import HEURISTIC_NAMES, load_config, parse_period
from errors import ConfigError, InputFileError, InvariantViolation, VeracityError
from pipeline import CdrPipeline
from utils.logger import setup_logger

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_INVARIANT = 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, help='INI configuration file (flags > file > defaults)')
    common.add_argument('--out-dir', type=str, default='output', help='Output directory for results')
    common.add_argument('--data-dir', type=str, help='Input directory (default: --out-dir)')
    common.add_argument('--period', type=str, help='Restrict the study window to START..END')
    common.add_argument('--seed', type=int, help='Random seed for the synthetic world')
    common.add_argument('--workers', type=int, help='Worker processes for the per-user stages')
    common.add_argument('--verbose', '-v', action='store_true', help='Enable verbose logging')

    parser = argparse.ArgumentParser(
        description="CDR veracity toolkit: home detection and multi-scale census validation",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py synth --out-dir world --seed 42
  python main.py homes --heuristic all --out-dir world
  python main.py indicators cme --config world/study.ini --out-dir world
  python main.py validate hotspots --out-dir world --period 2007-06-01..2007-06-15
  python main.py report --config world/study.ini --out-dir world --workers 4
        """
    )
    commands = parser.add_subparsers(dest='command', metavar='COMMAND')
    commands.required = True

    commands.add_parser('synth', parents=[common], help='Generate a synthetic world with ground truth')
    commands.add_parser('ingest-check', parents=[common], help='Parse all inputs and report rejects')

    homes = commands.add_parser('homes', parents=[common], help='Detect home towers')
    homes.add_argument('--heuristic', choices=list(HEURISTIC_NAMES) + ['all'], default='all',
                       help='Heuristic to run (default: all)')

    indicators = commands.add_parser('indicators', parents=[common], help='Mobility entropy indicators')
    indicators.add_argument('kind', choices=['entropy', 'cme'])

    validate = commands.add_parser('validate', parents=[common], help='Compare detected homes with census')
    validate.add_argument('kind', choices=['cosine', 'hotspots'])

    aggregate = commands.add_parser('aggregate', parents=[common], help='Aggregate onto an admin level')
    aggregate.add_argument('--level', required=True, help='Target level (iris, commune or a custom level)')

    commands.add_parser('correlate', parents=[common], help='Correlations at every level')
    commands.add_parser('report', parents=[common], help='Run every stage and the sensitivity report')
    return parser


def config_overrides(args: argparse.Namespace) -> Dict[str, Dict[str, Any]]:
    """Flag values as configuration overrides; unset flags are skipped"""
    overrides: Dict[str, Dict[str, Any]] = {
        'synth': {'seed': args.seed},
        'pipeline': {'workers': args.workers},
    }
    if args.verbose:
        overrides['logging'] = {'level': 'DEBUG'}
    if getattr(args, 'heuristic', None):
        names = HEURISTIC_NAMES if args.heuristic == 'all' else (args.heuristic,)
        overrides['home_detection'] = {'heuristics': ','.join(names)}
    return overrides


def command_options(args: argparse.Namespace) -> Dict[str, Any]:
    if args.command in ('indicators', 'validate'):
        return {'kind': args.kind}
    if args.command == 'aggregate':
        return {'level': args.level}
    return {}


def run_pipeline(args: argparse.Namespace) -> int:
    """
    Run one subcommand and map failures to exit codes

    Returns:
        0 on success, 2 for configuration or missing-input errors,
        3 for an internal invariant violation, 1 for anything else
    """
    try:
        settings = load_config(args.config, config_overrides(args))
        setup_logger(level=settings['logging']['level'], log_file=settings['logging']['log_file'] or None)
        period = parse_period(args.period) if args.period else None

        pipeline = CdrPipeline(settings, out_dir=args.out_dir, data_dir=args.data_dir, period=period)
        manifest = pipeline.run(args.command, **command_options(args))
    except (ConfigError, InputFileError) as e:
        logger.debug("Fatal input/config error", exc_info=True)
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE
    except InvariantViolation as e:
        logger.error(f"Invariant violation: {e}", exc_info=True)
        print(f"❌ Internal invariant violated: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except VeracityError as e:
        logger.debug("Fatal error", exc_info=True)
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        print(f"❌ Error: {e}", file=sys.stderr)
        return EXIT_FAILURE

    display_summary(args.command, manifest)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Main application entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)

    # Setup logging
    log_level = "DEBUG" if args.verbose else "INFO"
    setup_logger(level=log_level)

    # Print banner
    if sys.stdout.isatty():
        print_banner()

    return run_pipeline(args)


def print_banner():
    """Print application banner"""
    banner = """
╔══════════════════════════════════════════════════════════════╗
║                    CDR Veracity Toolkit                      ║
║        Home detection and multi-scale census validation      ║
║                                                              ║
║  📡 Voronoi tower tessellation                               ║
║  🏠 Home-detection heuristics H1-H5                          ║
║  📊 Entropy, hotspots and cross-scale correlations           ║
║  ⚡ Parallel per-user processing                             ║
╚══════════════════════════════════════════════════════════════╝
    """
    print(banner)


def display_summary(command: str, manifest: Dict[str, Any]):
    """Display a command's summary in a user-friendly format"""
    summary = manifest.get('summary', {})
    start, end = manifest.get('period', ['', ''])

    print("\n" + "=" * 60)
    print(f"📊 {command.upper()} RESULTS ({start} .. {end})")
    print("=" * 60)

    if command == 'report':
        for section, values in summary.items():
            print(f"\n🔹 {section}:")
            display_values(values, indent=2)
    else:
        display_values(summary, indent=1)

    timings = manifest.get('timings', {})
    print(f"\n⏱️  Total time: {timings.get('total', 0):.2f}s")
    print(f"💾 {len(manifest.get('outputs', {}))} files written; manifest: manifest-{command}.json")


def display_values(values: Any, indent: int = 1):
    pad = "  " * indent
    if not isinstance(values, dict):
        print(f"{pad}{values}")
        return
    for key, value in values.items():
        if isinstance(value, dict):
            print(f"{pad}{key}:")
            display_values(value, indent + 1)
        elif isinstance(value, float):
            print(f"{pad}{key}: {value:.4f}")
        elif isinstance(value, list) and value and isinstance(value[0], str) and len(value) > 3:
            print(f"{pad}{key}:")
            for item in value:
                print(f"{pad}  • {item}")
        else:
            print(f"{pad}{key}: {value}")


if __name__ == "__main__":
    try:
        exit_code = main()
        sys.exit(exit_code or 0)
    except KeyboardInterrupt:
        print("\n🛑 Operation cancelled by user")
        sys.exit(1)
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        print(f"❌ Error: {e}")
        sys.exit(1)

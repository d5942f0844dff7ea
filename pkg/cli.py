"""
rg-lattice command line: run registered experiments, plain simulations, the identity
checks, or list the registry
"""
import argparse
import json
import logging
import sys
from typing import List, Optional

from config import settings
from errors import RGLatticeError
from experiments import REGISTRY, ExperimentRunner, RunReport, list_experiments, listing_json
from reports import ReportBuilder

logger = logging.getLogger(__name__)

COMMANDS = ("simulate", "verify", "list")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rg-lattice",
        description="Simulations and RG analysis of the fractal space-time lattice.",
        epilog="Experiments: " + ", ".join(REGISTRY),
    )
    parser.add_argument("command", help="experiment name, or one of: simulate, verify, list")
    parser.add_argument("--config", type=str, default=None, help="JSON file with config values.")
    parser.add_argument("--seed", type=int, default=None, help="Master seed (default from RG_LATTICE_SEED).")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads; results do not depend on it.")
    parser.add_argument("--out", type=str, default=None, help="Output root (default from RG_LATTICE_OUTPUT_DIR).")
    parser.add_argument("--preset", choices=["desk", "paper"], default=settings.preset, help="Registry preset.")
    parser.add_argument("--overwrite", action="store_true", help="Replace files in a non-empty output directory.")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override one config value (dotted keys for nested fields, JSON values).")
    parser.add_argument("--json", action="store_true", help="Machine-readable output.")
    parser.add_argument("--module", type=str, default=None, help="Filter `list` by module tag.")
    return parser


def _emit_report(report: RunReport, as_json: bool) -> None:
    if as_json:
        print(json.dumps(report.as_dict(), indent=2, default=str))
    elif report.success:
        print(ReportBuilder.build_run_response(report))
    if not report.success:
        print(json.dumps(report.error, default=str), file=sys.stderr)
        if not as_json:
            print(ReportBuilder.build_error_response(report.name, report.error or {}), file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, settings.log_level),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    try:
        if args.command == "list":
            print(listing_json(args.module) if args.json else list_experiments(args.module))
            return 0

        runner = ExperimentRunner(output_root=args.out, overwrite=args.overwrite or None)
        options = dict(config_file=args.config, overrides=args.overrides, seed=args.seed, threads=args.threads)

        if args.command == "verify":
            reports = runner.verify(args.preset, **options)
            for report in reports:
                _emit_report(report, args.json)
            if not args.json:
                print(ReportBuilder.build_verify_response(reports))
            failed = [r for r in reports if not r.passed]
            if not failed:
                return 0
            return max((r.exit_code for r in failed), default=1) or 1

        report = runner.run(args.command, args.preset, **options)
        _emit_report(report, args.json)
        return report.exit_code

    except RGLatticeError as e:
        logger.error(f"rg-lattice failed: {e}")
        print(json.dumps(e.to_dict(), default=str), file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        print("\nInterrupted.", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())

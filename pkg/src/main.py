import argparse
import logging
import os
import sys

from src.config import validate_config
from src.errors import ConfigError, StageError
from src.pipeline import run_pipeline, run_shield_only, run_sweep_only

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3
LOG_ENV = "HABITAT_FORMA_LOG"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

logger = logging.getLogger("src")


def configure_logging(stream=None):
    """Installs one time-stamped handler on the package logger, level from HABITAT_FORMA_LOG."""
    requested = os.environ.get(LOG_ENV, "INFO").strip().upper()
    level = requested if requested in LOG_LEVELS else "INFO"
    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(logging.Formatter("[%(asctime)s] %(message)s", datefmt="%H:%M:%S"))
    for existing in list(logger.handlers):
        logger.removeHandler(existing)
    logger.addHandler(handler)
    logger.setLevel(level)
    logger.propagate = False
    if level != requested:
        logger.warning("Unknown %s value '%s', using INFO", LOG_ENV, requested)
    return logger


def _print_summary(report):
    results = report.results
    selected = results.get("selected_design")
    if selected:
        print(f"Selected radius: {selected['radius_m']:.2f} m "
              f"(floor {selected['floor_area_m2']:.1f} m2, shell {selected['shell_surface_m2']:.1f} m2)")
    shield = results.get("shield")
    if shield:
        print(f"Shield thickness: {shield['thickness_m']:.3f} m ({shield['governing']} governs)")
    budget = results.get("budget")
    if budget:
        print(f"Regolith margin: {budget['margin_volume_m3']:.1f} m3")
    print(f"Artifacts: {len(report.artifacts) + 1} files")


def run(command, config_path, out_dir=None, jobs=1, membrane_path=None):
    """
    Executes one CLI command.

    Returns:
        Process exit code: 0 success, 2 invalid config, 3 stage failure.
    """
    try:
        if command == "validate":
            findings = validate_config(config_path)
            for finding in findings:
                print(finding)
            if any(finding.severity == "error" for finding in findings):
                return EXIT_CONFIG
            print(f"{config_path}: OK" if not findings else f"{config_path}: OK with warnings")
            return EXIT_OK
        if command == "run":
            report = run_pipeline(config_path, out_dir, jobs)
        elif command == "sweep":
            report = run_sweep_only(config_path, out_dir, jobs)
        elif command == "shield":
            report = run_shield_only(config_path, membrane_path, out_dir)
        else:
            raise ValueError(f"unknown command {command}")
    except ConfigError as error:
        logger.error("Invalid configuration: %s", error)
        for finding in error.findings:
            logger.error("  %s", finding)
        return EXIT_CONFIG
    except StageError as error:
        logger.error("%s", error)
        logger.debug("Stage failure details", exc_info=True)
        return EXIT_STAGE
    _print_summary(report)
    return EXIT_OK


def parse_arguments(argv=None):
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        prog="habitat-forma",
        description="Habitat Forma - membrane form-finding, design sweep, shield and toolpath pipeline",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("run", "Run the full pipeline"),
                            ("sweep", "Run the design sweep and selection only"),
                            ("shield", "Generate the shield, toolpaths and budget for an existing membrane")):
        command = subparsers.add_parser(name, help=help_text)
        command.add_argument("--config", required=True, help="Path to the JSON config file")
        command.add_argument("--out", dest="out_dir", help="Output directory (overrides output_dir)")
        if name != "shield":
            command.add_argument("--jobs", type=int, default=1, help="Parallel sweep workers (default: 1)")
        else:
            command.add_argument("--membrane", required=True, help="Membrane OBJ file")

    validate = subparsers.add_parser("validate", help="Validate a config file")
    validate.add_argument("--config", required=True, help="Path to the JSON config file")

    args = parser.parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be at least 1")
    return args


def main(argv=None):
    args = parse_arguments(argv)
    configure_logging()
    return run(
        command=args.command,
        config_path=args.config,
        out_dir=getattr(args, "out_dir", None),
        jobs=getattr(args, "jobs", 1),
        membrane_path=getattr(args, "membrane", None),
    )


if __name__ == "__main__":
    sys.exit(main())

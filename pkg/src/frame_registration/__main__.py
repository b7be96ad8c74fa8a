import argparse
import logging
import sys

from pydantic import ValidationError

from frame_registration.cli.commands import (
    command_bench,
    command_register,
    command_speed,
    command_synth,
    resolve_config,
)
from frame_registration.cli.config_manager import create_config, show_config
from frame_registration.exceptions import ContractError, IngestionError, RegistrationError
from frame_registration.utils.logger import LOG_LEVELS, setup_logger

logger = logging.getLogger("frame_registration")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INGESTION = 2
EXIT_REGISTRATION = 3


def _shared_options():
    """Flags common to every computing command; unset flags fall back to the configuration."""
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--out", default=".", help="Output directory (default: current directory)")
    shared.add_argument("--config", help="Configuration file (key=value lines, a manifest works too)")
    shared.add_argument("--method", choices=["mpir", "meir"], help="Registration method")
    shared.add_argument("--scales", help="Comma-separated decreasing scale schedule, e.g. 100,10,1,0")
    shared.add_argument("--alpha", type=float, help="Elastic regularization weight")
    shared.add_argument("--mu", type=float, help="Second Lame constant")
    shared.add_argument("--lambda", dest="lam", type=float, help="First Lame constant")
    shared.add_argument("--grid", type=int, help="Registration grid cells per axis (power of two)")
    shared.add_argument("--two-level", action=argparse.BooleanOptionalAction,
                        help="Pre-register on a half grid first (--no-two-level overrides the configuration)")
    shared.add_argument("--iterate", type=int, choices=[1, 2], help="Number of MEIR passes")
    shared.add_argument("--pose-from", choices=["composition", "second-step"],
                        help="Field used for the pose of an iterated MEIR run")
    shared.add_argument("--seed", type=int, help="Seed of synthetic perturbations")
    shared.add_argument("--jobs", type=int, help="Worker threads for independent pairs")
    shared.add_argument("--intensity", type=float, help="Elastic intensity in grid cells")
    shared.add_argument("--sigma", type=float, help="Smoothing width of elastic perturbations in grid cells")
    shared.add_argument("--pad-margin", type=float, help="Zero margin added before synthetic warps")
    shared.add_argument("--log-level", choices=LOG_LEVELS, help="Log level")
    shared.add_argument("--log-file", help="Log file path")
    return shared


def parse_args(argv=None):
    """Parse command line arguments"""
    parser = argparse.ArgumentParser(
        prog="frame-reg",
        description="Rigid-like and elastic registration of image frames",
    )
    shared = _shared_options()

    subparsers = parser.add_subparsers(dest="command", help="Commands")

    # Register command
    register_parser = subparsers.add_parser("register", parents=[shared],
                                            help="Register a template frame to a reference frame")
    register_parser.add_argument("reference", help="Reference frame R")
    register_parser.add_argument("template", help="Template frame T")
    register_parser.add_argument("--both", action="store_true",
                                 help="Register with MPIR and MEIR and report the selected method")

    # Speed command
    speed_parser = subparsers.add_parser("speed", parents=[shared],
                                         help="NDM curve over consecutive frames of a directory")
    speed_parser.add_argument("frames_dir", help="Directory of frames (lexicographic order)")
    speed_parser.add_argument("--both", action="store_true", help="Register every pair with MPIR and MEIR")

    # Synth command
    synth_parser = subparsers.add_parser("synth", parents=[shared],
                                         help="Write a synthetic template with known deformation")
    synth_parser.add_argument("frame", help="Source frame")
    synth_parser.add_argument("--kind", choices=["rigid", "elastic", "rigid+elastic"],
                              default="rigid+elastic", help="Deformation kind")
    synth_parser.add_argument("--scale", type=float, default=1.0, help="Scale factor")
    synth_parser.add_argument("--rotation", type=float, default=0.0, help="Rotation in degrees")
    synth_parser.add_argument("--frame-index", type=int, default=0, help="Frame index mixed into the seed")

    # Bench command
    bench_parser = subparsers.add_parser("bench", parents=[shared], help="Synthetic benchmark tables")
    bench_parser.add_argument("frames_dir", help="Directory of source frames")
    bench_parser.add_argument("--case", required=True, choices=["i", "ii", "iii", "iv", "sweep-intensity"],
                              help="Benchmark case")
    bench_parser.add_argument("--sweep", help="Comma-separated sweep values (default depends on the case)")
    bench_parser.add_argument("--sweep-axis", choices=["scale", "rotation"], default="scale",
                              help="Swept parameter of case iv")
    bench_parser.add_argument("--rigid-only", action="store_true", help="Omit the elastic perturbation")
    bench_parser.add_argument("--mpir-only", action="store_true", help="Skip MEIR")

    # Configuration command
    config_parser = subparsers.add_parser("config", help="Configuration management")
    config_subparsers = config_parser.add_subparsers(dest="config_command", help="Configuration commands")

    create_config_parser = config_subparsers.add_parser("create", help="Create new configuration file")
    create_config_parser.add_argument("--path", help="Configuration file save path")
    create_config_parser.add_argument("--non-interactive", action="store_true",
                                      help="Non-interactive mode (use default values)")

    config_subparsers.add_parser("show", help="Show current configuration")

    return parser.parse_args(argv)


COMMANDS = {
    "register": command_register,
    "speed": command_speed,
    "synth": command_synth,
    "bench": command_bench,
}


def run_command(args) -> int:
    """Run a computing command and map its failure to an exit code."""
    try:
        config = resolve_config(args)
        setup_logger(log_level=config["LOG_LEVEL"], log_file=config["LOG_FILE"])
        COMMANDS[args.command](args)
    except IngestionError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INGESTION
    except (ContractError, ValidationError, ValueError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except RegistrationError as e:
        logger.error(f"Registration failed: {e}", exc_info=True)
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_REGISTRATION
    return EXIT_OK


def main(argv=None):
    """Main entry point"""
    args = parse_args(argv)

    if args.command in COMMANDS:
        sys.exit(run_command(args))
    elif args.command == "config":
        if args.config_command == "create":
            create_config(args.path, not args.non_interactive)
        elif args.config_command == "show":
            show_config()
        else:
            print("Please specify a configuration command: create or show")
            sys.exit(EXIT_USAGE)
    else:
        print("Unknown command. Use -h to see help.")
        sys.exit(EXIT_USAGE)


if __name__ == "__main__":
    main()

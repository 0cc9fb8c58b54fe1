import argparse
import logging
import os
import sys
import traceback

THREADS_ENV = "CORONALAB_MAX_THREADS"
EXIT_OK, EXIT_ERROR, EXIT_PRECONDITION, EXIT_CONFIG = 0, 1, 2, 3


def apply_thread_cap():
    # BLAS reads these once, when numpy is first imported
    cap = os.environ.get(THREADS_ENV)
    if not cap:
        return None
    if not cap.isdigit() or int(cap) < 1:
        logging.warning(f"Ignoring {THREADS_ENV}='{cap}': not a positive integer")
        return None
    for name in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[name] = cap
    return int(cap)


def build_parser():
    parser = argparse.ArgumentParser(description="Numerical laboratory for harmonic measure, dyadic lattices, "
                                                 "Riesz transforms and corona decompositions")
    parser.add_argument("-d", "--debug", help="Debug level (0: no debug, 1: basic debug, 2: detailed debug)",
                        type=int, choices=[0, 1, 2], default=1)
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run the experiment described by a config file")
    run.add_argument("--config", required=True, help="Path to the INI experiment config")
    run.add_argument("--seed", type=int, default=None, help="Override [experiment] seed")
    run.add_argument("--out", default=None, help="Override [experiment] output_dir")
    run.add_argument("--lattice-audit", action="store_true",
                     help="Also export the lattice of lattice-based experiments as JSON, "
                          "with a CSV of its invariant checks")

    commands.add_parser("list", help="List registered experiments")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)

    # Map debug-Level to logging-level
    debug_levels = {0: logging.CRITICAL, 1: logging.INFO, 2: logging.DEBUG}
    logging.basicConfig(level=debug_levels[args.debug], format='%(asctime)s - %(levelname)s ::: %(message)s',
                        datefmt='%Y-%m-%d %H:%M:%S')
    apply_thread_cap()

    # numpy is imported from here on
    from coronaLab.coronaLab import coronaLab, list_experiments
    from coronaLab.config import load_config
    from coronaLab.errors import ConfigError, PreconditionFailed

    if args.command == "list":
        for name, description in list_experiments():
            print(f"{name:15s} {description}")
        return EXIT_OK

    try:
        cfg = load_config(args.config, seed=args.seed, output_dir=args.out)
        lab = coronaLab(cfg)
        report = lab.run()
        if args.lattice_audit and lab.last_lattice is not None:
            report.attach_lattice(lab.last_lattice)
        report.export(cfg.output_dir)
    except ConfigError as e:
        logging.error(f"Invalid configuration: {e}")
        logging.debug(traceback.format_exc())
        return EXIT_CONFIG
    except PreconditionFailed as e:
        logging.error(f"Precondition failed: {e.hypothesis}")
        logging.debug(traceback.format_exc())
        return EXIT_PRECONDITION
    except Exception as e:
        logging.error(f"Experiment failed: {e}")
        logging.debug(traceback.format_exc())
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

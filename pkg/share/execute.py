import argparse
import json
import logging
import sys

from qthermo.job import job_executor

TOL_FLAGS = [name for name in job_executor.TOLERANCE_NAMES if name != "ds_eps"]


def get_parser():
    parser = argparse.ArgumentParser(
        prog="execute_qthermo_jobs",
        description="Classify, dilate, audit and decompose quantum operations.",
    )
    parser.add_argument("ini_files", nargs="*", help="job configuration files")
    parser.add_argument("--input", nargs="+", dest="input_paths", help="input documents or globs")
    parser.add_argument("--output", dest="output_dir", help="output directory")
    parser.add_argument("--command", choices=job_executor.COMMANDS)
    parser.add_argument("--generator", help="catalog name for the demo command")
    parser.add_argument("--generator-params", type=json.loads, help="JSON object of builder parameters")
    parser.add_argument("--dilation", choices=job_executor.DILATIONS)
    parser.add_argument("--interior-eps", type=float)
    for name in TOL_FLAGS:
        parser.add_argument("--tol-" + name.replace("_tol", "").replace("_", "-"), dest=name, type=float)
    parser.add_argument("--ds-eps", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--max-iter", type=int)
    parser.add_argument("--parallel", type=int, help="number of worker processes")
    parser.add_argument("--pdf", dest="save_pdf_report", action="store_true", default=None)
    parser.add_argument("--no-version", dest="versioned_output", action="store_false", default=None)
    parser.add_argument("--verbose", action="store_true", default=None)
    return parser


def run_job(ini_path, overrides):
    print("#" * 80)
    print("Executing:", ini_path if ini_path is not None else "command line job")
    executor = job_executor.job_executor(ini_path)
    try:
        executor.get_config()
    except (ValueError, OSError) as err:
        print("Invalid configuration:", err)
        return 2
    executor.set_overrides(**overrides)
    return executor.execute_jobs()


def execute(argv=None):
    args = get_parser().parse_args(argv)
    overrides = {key: value for key, value in vars(args).items() if key != "ini_files"}
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    ini_files = args.ini_files or [None]
    if args.ini_files == [] and args.command is None:
        print("No ini file path or --command specified!")
        print("Usage: execute_qthermo_jobs path/to/ini-file [--input ...] [--output ...]")
        return 2
    exit_code = 0
    for ini_path in ini_files:
        exit_code = max(exit_code, run_job(ini_path, overrides))
    print("#" * 80)
    print("Done! exit code", exit_code)
    print("#" * 80)
    return exit_code


def main():
    sys.exit(execute())


if __name__ == "__main__":
    main()

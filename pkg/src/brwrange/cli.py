"""Command line entry point: brwrange <experiment> [--config F] [--seed S] ..."""
import argparse
import json
import logging
import sys

from . import experiments as ex


def build_parser():
    p = argparse.ArgumentParser(prog="brwrange", description="Run a batch experiment and write a report.")
    p.add_argument("experiment", choices=ex.EXPERIMENTS)
    p.add_argument("--config", help="JSON file merged over the experiment defaults")
    p.add_argument("--seed", type=int, help="master seed (u64); overrides the config")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--workers", type=int, default=1, help="worker processes for replicate jobs")
    p.add_argument("--format", choices=("csv", "ndjson"), default="csv")
    p.add_argument("-v", "--verbose", action="store_true", help="log timings to stderr")
    return p


def load_config(args):
    d = {}
    if args.config:
        try:
            with open(args.config) as f:
                d = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ex.ConfigError(f"cannot read config: {e}") from None
        if not isinstance(d, dict):
            raise ex.ConfigError("config must be a JSON object")
    if args.out:
        d["out"] = args.out
    return ex.ExperimentConfig.from_dict(args.experiment, d, seed=args.seed)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args)
        if args.workers < 1:
            raise ex.ConfigError("workers must be >= 1")
        rep = ex.run(cfg, workers=args.workers)
    except ex.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    text = rep.to_csv() if args.format == "csv" else rep.to_ndjson()
    if cfg.out:
        with open(cfg.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    logging.getLogger("brwrange").info("runtime %.2fs", rep.runtime)
    return 0 if rep.ok else 1


if __name__ == "__main__":
    sys.exit(main())

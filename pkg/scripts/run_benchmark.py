"""Run the trial protocol on one or more datasets and print mean NLL.

    python3 scripts/run_benchmark.py wine concrete --trials 20 --compare-variants

Thin wrapper over ``presto bench``; results land in results/<dataset>/.
"""
import argparse
import sys

from presto import cli


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("datasets", nargs="+")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--compare-variants", action="store_true")
    p.add_argument("--output-dir", default="results")
    args = p.parse_args(argv)
    code = 0
    for name in args.datasets:
        cmd = ["bench", "--dataset", name, "--seed", str(args.seed), "--output-dir", args.output_dir]
        if args.trials:
            cmd += ["--trials", str(args.trials)]
        if args.compare_variants:
            cmd.append("--compare-variants")
        code = max(code, cli.main(cmd))
    return code


if __name__ == "__main__":
    sys.exit(main())

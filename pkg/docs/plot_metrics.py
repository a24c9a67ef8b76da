"""Plot metrics.csv or sweep.csv files produced by the onebitfl CLI.

Usage:
    python3 docs/plot_metrics.py out/metrics.csv [more.csv ...] --column test_acc
    python3 docs/plot_metrics.py out/sweep.csv

Needs matplotlib (not a package dependency; install it separately).
"""

import argparse
import csv
import sys


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("csv", nargs="+", help="metrics.csv or sweep.csv paths")
    parser.add_argument("--column", default="test_acc",
                        help="metrics column to plot against the round index")
    parser.add_argument("--out", default=None, help="save instead of showing")
    args = parser.parse_args(argv)

    try:
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib is required: pip install matplotlib", file=sys.stderr)
        return 1

    fig, ax = plt.subplots(figsize=(6, 4))
    for path in args.csv:
        rows = read_rows(path)
        if not rows:
            print(f"{path}: empty", file=sys.stderr)
            continue
        if "round" in rows[0]:
            xs = [int(r["round"]) for r in rows]
            ys = [float(r[args.column]) for r in rows if r[args.column] != ""]
            xs = xs[len(xs) - len(ys):]
            label = f"{path} ({rows[0].get('scheme', '?')})"
            ax.set_xlabel("round")
            ax.set_ylabel(args.column)
        else:  # sweep output: first column is the swept axis
            axis = next(iter(rows[0]))
            xs = [float(r[axis]) for r in rows]
            ys = [float(r["final_test_acc"]) for r in rows]
            label = path
            ax.set_xlabel(axis)
            ax.set_ylabel("final_test_acc")
        ax.plot(xs, ys, marker="o", markersize=3, label=label)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    if args.out:
        fig.savefig(args.out, dpi=150)
        print(f"wrote {args.out}")
    else:
        plt.show()
    return 0


if __name__ == "__main__":
    sys.exit(main())

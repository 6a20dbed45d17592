#!/usr/bin/env python3
"""Convert the NAS-Bench-201 API file into a seki-tabular v1 table.

Needs the `nas_201_api` package and the benchmark file, e.g.
NAS-Bench-201-v1_1-096897.pth. Writes one row per architecture with the
200-epoch accuracies of the official training runs.
"""

import argparse
import sys

COLUMNS = [
    # (column name, dataset, result key)
    ("cifar10-valid/valid", "cifar10-valid", "valid-accuracy"),
    ("cifar10/test", "cifar10", "test-accuracy"),
    ("cifar100/test", "cifar100", "test-accuracy"),
    ("ImageNet16-120/test", "ImageNet16-120", "test-accuracy"),
]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("benchmark", help="NAS-Bench-201 .pth file")
    parser.add_argument("output", help="table to write")
    parser.add_argument("--hp", default="200", help="training schedule (12 or 200 epochs)")
    args = parser.parse_args()

    try:
        from nas_201_api import NASBench201API
    except ImportError:
        sys.exit("install nas_201_api first: pip install nas-bench-201")

    api = NASBench201API(args.benchmark, verbose=False)
    metrics = ",".join(f"{name}:max" for name, _, _ in COLUMNS)
    with open(args.output, "w", encoding="utf-8") as out:
        out.write(f"# seki-tabular v1; space=nas201; metrics={metrics}\n")
        for index in range(len(api)):
            values = []
            for _, dataset, key in COLUMNS:
                info = api.get_more_info(index, dataset, hp=args.hp, is_random=False)
                values.append(f"{info[key]:.2f}")
            out.write(api.arch(index) + "\t" + "\t".join(values) + "\n")
    print(f"wrote {len(api)} rows to {args.output}")


if __name__ == "__main__":
    main()

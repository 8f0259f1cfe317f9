#!/usr/bin/env python3
"""Convert a CSV MNIST subset (784 pixel columns, label last) to IDX files.

The input may be a .csv, a .csv.gz, or an mlxtend wheel, which bundles a
5000-image subset at mlxtend/data/data/mnist_5k.csv.gz.

    python3 tools/mnist_csv_to_idx.py mlxtend-0.24.0-py3-none-any.whl data/
"""

import argparse
import gzip
import pathlib
import struct
import sys
import zipfile

WHEEL_MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_rows(path: pathlib.Path) -> list[list[int]]:
    if path.suffix == ".whl":
        with zipfile.ZipFile(path) as z:
            text = gzip.decompress(z.read(WHEEL_MEMBER)).decode()
    elif path.suffix == ".gz":
        text = gzip.decompress(path.read_bytes()).decode()
    else:
        text = path.read_text()
    rows = [[int(float(v)) for v in line.split(",")] for line in text.splitlines() if line.strip()]
    for i, r in enumerate(rows):
        if len(r) != 785:
            sys.exit(f"row {i}: expected 785 columns, got {len(r)}")
        if not all(0 <= v <= 255 for v in r[:-1]):
            sys.exit(f"row {i}: pixel outside 0..255")
    return rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("source", type=pathlib.Path)
    ap.add_argument("out_dir", type=pathlib.Path)
    ap.add_argument("--prefix", default="mnist5k")
    args = ap.parse_args()

    rows = read_rows(args.source)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    images = args.out_dir / f"{args.prefix}-images-idx3-ubyte"
    labels = args.out_dir / f"{args.prefix}-labels-idx1-ubyte"
    images.write_bytes(struct.pack(">IIII", 0x803, len(rows), 28, 28) + bytes(v for r in rows for v in r[:-1]))
    labels.write_bytes(struct.pack(">II", 0x801, len(rows)) + bytes(r[-1] for r in rows))
    print(f"wrote {len(rows)} images to {images} and {labels}")


if __name__ == "__main__":
    main()

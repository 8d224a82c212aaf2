"""Writes the sample CSV fixtures. Deterministic (fixed seed)."""
import csv
import math
import random
import sys
from pathlib import Path


def write(path, rows):
    with open(path, "w", newline="") as f:
        csv.writer(f, lineterminator="\n").writerows(rows)


def main(out):
    out = Path(out)
    rng = random.Random(7)
    r = lambda v: round(v, 6)

    w = [rng.uniform(-1, 1) for _ in range(16)]
    rows = []
    for _ in range(2048):
        x = [rng.gauss(0, 1) for _ in range(16)]
        rows.append([r(v) for v in x] + [r(sum(a * b for a, b in zip(w, x)))])
    write(out / "linear.csv", rows)

    w2 = [0.5, -0.25]
    rows = []
    for _ in range(256):
        x = [rng.uniform(-1, 1) for _ in range(2)]
        rows.append([r(v) for v in x] + [r(sum(a * b for a, b in zip(w2, x)))])
    write(out / "linear_converge.csv", rows)

    w8 = [rng.uniform(-1, 1) for _ in range(8)]
    rows_l, rows_s = [], []
    for _ in range(1024):
        x = [rng.gauss(0, 1) for _ in range(8)]
        s = sum(a * b for a, b in zip(w8, x))
        if abs(s) < 0.2:
            continue
        rows_l.append([r(v) for v in x] + [1 if s > 0 else 0])
        rows_s.append([r(v) for v in x] + [1 if s > 0 else -1])
    write(out / "logistic.csv", rows_l)
    write(out / "svm.csv", rows_s)

    # user/item one-hots over 16 users and 16 items, rank-8 ratings
    U = [[rng.uniform(0, 0.5) for _ in range(8)] for _ in range(16)]
    V = [[rng.uniform(0, 0.5) for _ in range(8)] for _ in range(16)]
    rows = []
    for _ in range(1024):
        u, i = rng.randrange(16), rng.randrange(16)
        x = [0] * 32
        x[u] = 1
        x[16 + i] = 1
        rows.append(x + [r(sum(a * b for a, b in zip(U[u], V[i])))])
    write(out / "lrmf.csv", rows)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent)

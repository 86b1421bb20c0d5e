"""Regenerate the stand-in prior-experiment CSVs for the two case studies.

The original 75 laboratory compositions are not public. These files mimic
their character: PA-56-rich blends whose additive levels sit on a few
favoured values, so the data cover the design space unevenly.

    python scenarios/make_data.py
"""

import csv
from pathlib import Path

import numpy as np

HERE = Path(__file__).parent
N_EXP = 75


def additive_levels(rng):
    pha = rng.choice([0.0, 0.01, 0.02, 0.03], size=N_EXP, p=[0.2, 0.3, 0.4, 0.1])
    amino = rng.choice([0.0, 0.02, 0.03, 0.05], size=N_EXP, p=[0.25, 0.3, 0.3, 0.15])
    metal = rng.choice([0.0, 0.02, 0.04, 0.06], size=N_EXP, p=[0.2, 0.35, 0.35, 0.1])
    return pha, amino, metal


def write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.3f}" for v in r])


def main():
    rng = np.random.default_rng(20240517)
    pha, amino, metal = additive_levels(rng)
    pa = 1.0 - pha - amino - metal
    write(HERE / "case_4d_data.csv", ["PA-56", "PhA", "amino", "metal"],
          np.column_stack([pa, pha, amino, metal]))

    # 9-D: split the amino total over an allowed single/pair, metal is one-hot
    amino_splits = [(0, 1, 0, 0), (0, 0, 0, 1), (0.5, 0, 0, 0.5), (0.6, 0, 0.4, 0)]
    rows = []
    for i in range(N_EXP):
        split = np.array(amino_splits[rng.choice(4, p=[0.4, 0.3, 0.2, 0.1])], dtype=float)
        hot = np.zeros(3)
        hot[rng.choice(3, p=[0.6, 0.3, 0.1])] = 1.0
        am = np.round(amino[i] * split, 3)
        me = metal[i] * hot
        rows.append([1.0 - pha[i] - am.sum() - me.sum(), pha[i], *am, *me])
    write(HERE / "case_9d_data.csv",
          ["PA-56", "PhA", "CS", "BN", "THAM", "MEL", "CaBO", "ZnBO", "HNT"], rows)


if __name__ == "__main__":
    main()

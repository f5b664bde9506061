"""Regenerate the bundled benchmark datasets.

Both tables are synthetic stand-ins for the public benchmarks they are
modeled after, sized and distributed so the default training pipeline
lands at the published operating points.  Generation is deterministic:
rerunning this script reproduces the shipped files byte for byte.

Usage: python scripts/make_datasets.py [--out-dir src/vfglm/datasets]
"""

import argparse
import gzip
import io
from pathlib import Path

import numpy as np

# credit default generator: a rare high-risk cluster among the positives
# gives the score distribution its heavy upper tail
CREDIT_ROWS = 30_000
CREDIT_COLS = 23
CREDIT_POSITIVE_RATE = 0.221
CREDIT_SHIFT_BULK = 0.10
CREDIT_SHIFT_CLUSTER = 3.5
CREDIT_CLUSTER_FRAC = 0.38
CREDIT_CLUSTER_STD = 0.55
CREDIT_COL_NOISE = 0.68
CREDIT_SEED = 0

# doctor visits generator: counts concentrated near one visit with a thin
# multi-visit tail; dispersion is sub-Poisson by construction
VISITS_ROWS = 5_190
VISITS_COLS = 19
VISITS_SIGNAL = 0.23694
VISITS_DISPERSION = 0.59072
VISITS_TAIL_PROB = 0.03234
VISITS_TAIL_MEAN = 2.35652
VISITS_COL_NOISE = 0.51554
VISITS_SEED = 0

SMALL_ROWS = 50
SMALL_COLS = 8
SMALL_LOGISTIC_SEED = 3
SMALL_POISSON_SEED = 5


def _signal_matrix(latent, cols, col_noise, rng):
    """Spread a scalar latent across feature columns plus isotropic noise."""
    direction = rng.normal(0.0, 1.0, cols)
    direction /= np.linalg.norm(direction)
    return np.outer(latent, direction) + rng.normal(
        0.0, col_noise, (latent.size, cols)
    )


def credit_default_table():
    rng = np.random.default_rng(CREDIT_SEED)
    m = CREDIT_ROWS
    labels = np.where(rng.random(m) < CREDIT_POSITIVE_RATE, 1, 0)
    latent = rng.normal(0.0, 1.0, m)
    pos = np.flatnonzero(labels == 1)
    in_cluster = rng.random(pos.size) < CREDIT_CLUSTER_FRAC
    latent[pos] = np.where(
        in_cluster,
        rng.normal(CREDIT_SHIFT_CLUSTER, CREDIT_CLUSTER_STD, pos.size),
        rng.normal(CREDIT_SHIFT_BULK, 1.0, pos.size),
    )
    x = _signal_matrix(latent, CREDIT_COLS, CREDIT_COL_NOISE, rng)

    names = (
        ["credit_limit", "age"]
        + [f"pay_delay_{i}" for i in range(1, 7)]
        + [f"bill_amt_{i}" for i in range(1, 7)]
        + [f"pay_amt_{i}" for i in range(1, 7)]
        + ["income_band", "dependents", "tenure_months"]
    )
    cols = {}
    cols["credit_limit"] = np.round(140_000 + 60_000 * x[:, 0], -3)
    cols["age"] = np.clip(np.rint(37 + 9 * x[:, 1]), 21, 79)
    for i in range(6):
        cols[f"pay_delay_{i + 1}"] = np.clip(np.rint(1.4 * x[:, 2 + i]), -2, 8)
    for i in range(6):
        cols[f"bill_amt_{i + 1}"] = np.round(45_000 + 38_000 * x[:, 8 + i], 0)
    for i in range(6):
        cols[f"pay_amt_{i + 1}"] = np.round(5_000 + 4_800 * x[:, 14 + i], 0)
    cols["income_band"] = np.clip(np.rint(3.5 + 1.8 * x[:, 20]), 1, 7)
    cols["dependents"] = np.clip(np.rint(1.5 + 1.1 * x[:, 21]), 0, 6)
    cols["tenure_months"] = np.clip(np.rint(48 + 22 * x[:, 22]), 1, 120)
    features = np.column_stack([cols[n] for n in names])
    return names, features, labels


def doctor_visits_table():
    rng = np.random.default_rng(VISITS_SEED)
    m = VISITS_ROWS
    latent = rng.normal(0.0, 1.0, m)
    rate = np.exp(VISITS_SIGNAL * latent)
    visits = np.maximum(0, np.rint(rate + rng.normal(0, VISITS_DISPERSION, m)))
    chronic_tail = rng.random(m) < VISITS_TAIL_PROB
    visits[chronic_tail] += rng.poisson(VISITS_TAIL_MEAN, int(chronic_tail.sum()))
    x = _signal_matrix(latent, VISITS_COLS, VISITS_COL_NOISE, rng)

    names = (
        ["age", "income_decile", "health_score"]
        + [f"chronic_flag_{i}" for i in range(1, 5)]
        + ["activity_limit_days", "illness_count", "medication_count"]
        + [f"wellbeing_{i}" for i in range(1, 6)]
        + ["bmi", "consultation_distance", "insurance_level", "household_size"]
    )
    cols = {}
    cols["age"] = np.clip(np.rint(42 + 15 * x[:, 0]), 18, 92)
    cols["income_decile"] = np.clip(np.rint(5.5 + 2.2 * x[:, 1]), 1, 10)
    cols["health_score"] = np.round(50 + 18 * x[:, 2], 1)
    for i in range(4):
        cols[f"chronic_flag_{i + 1}"] = np.clip(np.rint(0.8 * x[:, 3 + i] + 0.6), 0, 4)
    cols["activity_limit_days"] = np.clip(np.rint(2.5 + 2.4 * x[:, 7]), 0, 14)
    cols["illness_count"] = np.clip(np.rint(1.2 + 1.1 * x[:, 8]), 0, 5)
    cols["medication_count"] = np.clip(np.rint(1.8 + 1.5 * x[:, 9]), 0, 8)
    for i in range(5):
        cols[f"wellbeing_{i + 1}"] = np.round(3.0 + 1.2 * x[:, 10 + i], 2)
    cols["bmi"] = np.round(26 + 4.5 * x[:, 15], 1)
    cols["consultation_distance"] = np.round(np.abs(8 + 6 * x[:, 16]), 1)
    cols["insurance_level"] = np.clip(np.rint(1.5 + 0.9 * x[:, 17]), 0, 3)
    cols["household_size"] = np.clip(np.rint(2.6 + 1.2 * x[:, 18]), 1, 8)
    features = np.column_stack([cols[n] for n in names])
    return names, features, visits.astype(int)


def small_table(kind):
    if kind == "logistic":
        rng = np.random.default_rng(SMALL_LOGISTIC_SEED)
        x = rng.normal(0.0, 1.0, (SMALL_ROWS, SMALL_COLS))
        w = rng.normal(0.0, 1.0, SMALL_COLS)
        p = 1.0 / (1.0 + np.exp(-(x @ w)))
        y = np.where(rng.random(SMALL_ROWS) < p, 1, 0)
    else:
        rng = np.random.default_rng(SMALL_POISSON_SEED)
        x = rng.normal(0.0, 1.0, (SMALL_ROWS, SMALL_COLS))
        w = rng.normal(0.0, 0.3, SMALL_COLS)
        y = rng.poisson(np.exp(np.clip(x @ w, -3, 3)))
    names = [f"x{i}" for i in range(SMALL_COLS)]
    return names, x, y


def write_csv_gz(path, names, features, labels, float_fmt="%.6g"):
    buf = io.StringIO()
    buf.write(",".join(names + ["label"]) + "\n")
    for row, label in zip(features, labels):
        cells = [float_fmt % v for v in row]
        cells.append(str(int(label)) if float(label).is_integer() else str(label))
        buf.write(",".join(cells) + "\n")
    # fixed mtime keeps the gzip output reproducible
    with open(path, "wb") as fh:
        with gzip.GzipFile(fileobj=fh, mode="wb", mtime=0) as gz:
            gz.write(buf.getvalue().encode())


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--out-dir",
        default=str(Path(__file__).resolve().parent.parent / "src/vfglm/datasets"),
    )
    args = parser.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    names, features, labels = credit_default_table()
    write_csv_gz(out / "credit_default.csv.gz", names, features, labels)
    print(f"credit_default: {features.shape[0]} rows, {features.shape[1]} cols, "
          f"positive rate {labels.mean():.3f}")

    names, features, visits = doctor_visits_table()
    write_csv_gz(out / "doctor_visits.csv.gz", names, features, visits)
    print(f"doctor_visits: {features.shape[0]} rows, {features.shape[1]} cols, "
          f"mean count {visits.mean():.3f}, max {visits.max()}")

    for kind in ("logistic", "poisson"):
        names, x, y = small_table(kind)
        write_csv_gz(out / f"synthetic_{kind}_small.csv.gz", names, x, y)
        print(f"synthetic_{kind}_small: {x.shape[0]} rows, {x.shape[1]} cols")


if __name__ == "__main__":
    main()

"""Dataset ingestion, vertical partitioning, and preprocessing.

Rows stay aligned by position through every operation: all parties apply
the same permutation, so sample i means the same entity everywhere without
shipping an explicit join key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd


@dataclass
class LabeledTable:
    features: np.ndarray
    labels: np.ndarray
    feature_names: list[str]


@dataclass
class VerticalDataset:
    """Per-party feature blocks over one aligned row space.

    The label vector belongs to exactly one party; other parties never see
    it outside the protocol.
    """

    blocks: list[np.ndarray]
    labels: np.ndarray
    label_owner: int = 0
    feature_names: list[list[str]] = field(default_factory=list)

    def __post_init__(self):
        m = self.labels.shape[0]
        for i, block in enumerate(self.blocks):
            if block.shape[0] != m:
                raise ValueError(f"block {i} has {block.shape[0]} rows, labels {m}")
        if not 0 <= self.label_owner < len(self.blocks):
            raise ValueError("label_owner out of range")

    @property
    def n_rows(self) -> int:
        return int(self.labels.shape[0])

    @property
    def n_parties(self) -> int:
        return len(self.blocks)

    def widths(self) -> list[int]:
        return [block.shape[1] for block in self.blocks]


def load_csv(
    path: str | Path, label_column: str, binary_labels: bool = False
) -> LabeledTable:
    """Read a numeric CSV with a header; optionally remap 0/1 labels to -1/+1."""
    df = pd.read_csv(path)
    if label_column not in df.columns:
        raise ValueError(f"label column {label_column!r} not in {list(df.columns)}")
    try:
        df = df.apply(pd.to_numeric, errors="raise")
    except (ValueError, TypeError) as exc:
        raise ValueError(f"non-numeric cell in {path}: {exc}") from exc
    labels = df[label_column].to_numpy(dtype=float)
    feats = df.drop(columns=[label_column])
    if binary_labels:
        values = set(np.unique(labels).tolist())
        if values <= {0.0, 1.0}:
            labels = np.where(labels > 0, 1.0, -1.0)
        elif not values <= {-1.0, 1.0}:
            raise ValueError(f"binary labels must be 0/1 or -1/+1, got {sorted(values)}")
    return LabeledTable(
        feats.to_numpy(dtype=float), labels, [str(c) for c in feats.columns]
    )


def vertical_split(table: LabeledTable, k: int) -> VerticalDataset:
    """Partition columns across k parties.

    The label holder (party 0) takes the first half of the columns rounded
    up, party 1 the remainder; any further party receives a copy of party
    1's block so the row space never changes with k.
    """
    if k < 2:
        raise ValueError("need at least two parties")
    f = table.features.shape[1]
    head = math.ceil(f / 2)
    blocks = [table.features[:, :head], table.features[:, head:]]
    names = [table.feature_names[:head], table.feature_names[head:]]
    for _ in range(k - 2):
        blocks.append(blocks[1].copy())
        names.append(list(names[1]))
    return VerticalDataset(blocks, table.labels.copy(), 0, names)


def train_test_split(
    ds: VerticalDataset, ratio: float = 0.7, seed: int = 0
) -> tuple[VerticalDataset, VerticalDataset]:
    """Shuffle rows once and cut; every party applies the same permutation."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must be strictly between 0 and 1")
    m = ds.n_rows
    perm = np.random.default_rng(seed).permutation(m)
    n_train = int(round(m * ratio))
    tr, te = perm[:n_train], perm[n_train:]

    def take(idx):
        return VerticalDataset(
            [block[idx] for block in ds.blocks],
            ds.labels[idx],
            ds.label_owner,
            [list(n) for n in ds.feature_names],
        )

    return take(tr), take(te)


def standardize(
    train: VerticalDataset, test: VerticalDataset
) -> tuple[VerticalDataset, VerticalDataset]:
    """Z-score every feature column using train statistics only.

    Zero-variance columns pass through unchanged.  Labels are untouched.
    """
    tr_blocks, te_blocks = [], []
    for tr, te in zip(train.blocks, test.blocks):
        mean = tr.mean(axis=0)
        std = tr.std(axis=0)
        keep = std == 0
        scale = np.where(keep, 1.0, std)
        shift = np.where(keep, 0.0, mean)
        tr_blocks.append((tr - shift) / scale)
        te_blocks.append((te - shift) / scale)
    mk = lambda blocks, src: VerticalDataset(
        blocks, src.labels.copy(), src.label_owner, [list(n) for n in src.feature_names]
    )
    return mk(tr_blocks, train), mk(te_blocks, test)


def make_synthetic_logistic(rows: int, features: int, seed: int = 0) -> LabeledTable:
    """Linearly separable-ish binary data with -1/+1 labels."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(rows, features))
    w = rng.normal(size=features)
    margin = X @ w / math.sqrt(features) + rng.normal(scale=0.5, size=rows)
    y = np.where(margin > 0, 1.0, -1.0)
    if len(np.unique(y)) < 2:
        y[0] = -y[0]
    names = [f"x{j}" for j in range(features)]
    return LabeledTable(X, y, names)


def make_synthetic_poisson(rows: int, features: int, seed: int = 0) -> LabeledTable:
    """Count outcomes from a log-linear rate."""
    rng = np.random.default_rng(seed)
    X = rng.normal(scale=0.6, size=(rows, features))
    w = rng.normal(scale=0.4, size=features)
    rate = np.exp(np.clip(X @ w, -3.0, 3.0))
    y = rng.poisson(rate).astype(float)
    names = [f"x{j}" for j in range(features)]
    return LabeledTable(X, y, names)


def bundled_dataset_path(name: str) -> Path:
    """Path to a packaged dataset, by file name or bare name."""
    if "." not in name:
        name = f"{name}.csv.gz"
    ref = resources.files("vfglm") / "datasets" / name
    with resources.as_file(ref) as p:
        if not p.exists():
            raise FileNotFoundError(f"no bundled dataset {name!r}")
        return Path(p)

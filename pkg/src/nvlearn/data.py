"""Datasets: CSV I/O, splitting, the two-week toy set, and the resampling
and outlier transforms used in the robustness experiments.

CSV layout: one header row, feature columns first, demand column(s) last,
``.`` as decimal separator. Lines starting with ``#`` are comments.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core_math import as_matrix, make_rng

TABLE1_SEED = 20170
TABLE1_FEATURES = ("holiday", "weather", "promotion")
TABLE1_TRAIN = (13, 7, 16, 7, 12, 15, 19, 20, 12, 5, 5, 7, 18, 7)
TABLE1_TEST = (7, 10, 6, 5, 18, 12, 18, 17, 19, 7, 5, 13, 5, 14)
WEEKDAYS = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")


class DataError(ValueError):
    """Malformed input data; ``row`` is the 1-based file line when known."""

    def __init__(self, message, row=None):
        super().__init__(f"row {row}: {message}" if row is not None else message)
        self.row = row


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    demands: np.ndarray
    feature_names: tuple = ()
    demand_names: tuple = ()

    def __post_init__(self):
        X = as_matrix(self.features, "features")
        D = as_matrix(self.demands, "demands")
        if X.shape[0] != D.shape[0]:
            raise DataError(f"{X.shape[0]} feature rows but {D.shape[0]} demand rows")
        if X.shape[0] < 1:
            raise DataError("dataset has no rows")
        fnames = tuple(self.feature_names) or tuple(f"x{i}" for i in range(X.shape[1]))
        dnames = tuple(self.demand_names) or (
            ("demand",) if D.shape[1] == 1 else tuple(f"demand{i}" for i in range(D.shape[1]))
        )
        if len(fnames) != X.shape[1] or len(dnames) != D.shape[1]:
            raise DataError("column names do not match matrix widths")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "demands", D)
        object.__setattr__(self, "feature_names", fnames)
        object.__setattr__(self, "demand_names", dnames)

    @property
    def n_rows(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def n_demands(self):
        return self.demands.shape[1]

    def take(self, indices):
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(self.features[idx], self.demands[idx], self.feature_names, self.demand_names)

    def with_demands(self, demands):
        return Dataset(self.features, demands, self.feature_names, self.demand_names)


@dataclass(frozen=True)
class Block:
    feature_key: tuple
    row_indices: tuple


def _fmt(v):
    v = float(v)
    # integral values print without a trailing ".0"; everything else via repr
    if v.is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(v)


def save_csv(data, path, comments=()):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(data.feature_names) + list(data.demand_names))
        for x, d in zip(data.features, data.demands):
            w.writerow([_fmt(v) for v in x] + [_fmt(v) for v in d])


def load_csv(path, n_demand=1):
    """Read a dataset whose last ``n_demand`` columns are demand."""
    header, rows = None, []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or (rec[0].lstrip().startswith("#")):
                continue
            if header is None:
                header = [h.strip() for h in rec]
                if len(header) <= n_demand:
                    raise DataError(f"need at least one feature and {n_demand} demand column(s)", lineno)
                continue
            if len(rec) != len(header):
                raise DataError(f"expected {len(header)} cells, found {len(rec)}", lineno)
            try:
                vals = [float(cell) for cell in rec]
            except ValueError as exc:
                raise DataError(f"non-numeric cell ({exc})", lineno) from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError("non-finite cell", lineno)
            rows.append(vals)
    if header is None:
        raise DataError(f"{path}: empty file")
    if not rows:
        raise DataError(f"{path}: header but no data rows")
    arr = np.array(rows, dtype=np.float64)
    k = len(header) - n_demand
    return Dataset(arr[:, :k], arr[:, k:], tuple(header[:k]), tuple(header[k:]))


def train_size(n, fraction):
    """``round(n * fraction)`` with exact halves rounded down.

    Halves go down so 13,170 rows at 0.75 give 9,877 training rows.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"train fraction must lie in (0, 1), got {fraction}")
    # rounding to 9 places strips float noise such as 0.29 * 100 = 28.999...
    k = math.ceil(round(n * fraction, 9) - 0.5)
    if k < 1 or k > n - 1:
        raise ValueError(f"fraction {fraction} of {n} rows leaves one side empty")
    return k


def split_indices(n, fraction, seed):
    k = train_size(n, fraction)
    perm = make_rng(seed).permutation(n)
    return perm[:k], perm[k:]


def split(data, train_fraction=0.75, seed=0):
    tr, te = split_indices(data.n_rows, train_fraction, seed)
    return data.take(tr), data.take(te)


def _weekday_holiday(days, start_weekday=0):
    return np.array([1.0 if (start_weekday + i) % 7 >= 5 else 0.0 for i in range(days)])


def table1_dataset():
    """The two-week training and testing sets, Monday first.

    Demands are fixed; weather and promotion flags are drawn from
    ``TABLE1_SEED`` since only the demands were published.
    """
    rng = make_rng(TABLE1_SEED)
    flags = rng.integers(0, 2, size=(28, 2)).astype(np.float64)
    holiday = _weekday_holiday(28)
    X = np.column_stack([holiday, flags])
    D = np.array(TABLE1_TRAIN + TABLE1_TEST, dtype=np.float64).reshape(-1, 1)
    full = Dataset(X, D, TABLE1_FEATURES)
    return full.take(range(14)), full.take(range(14, 28))


def gen_synthetic(rng, days, demand_low=3, demand_high=20, start_weekday=0):
    """Daily rows with binary holiday/weather/promotion flags.

    Demand is a uniform integer in ``[demand_low, demand_high]`` and is
    independent of the flags. Holiday marks Saturdays and Sundays.
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    if demand_low > demand_high:
        raise ValueError(f"empty demand range [{demand_low}, {demand_high}]")
    demand = rng.integers(demand_low, demand_high, endpoint=True, size=days).astype(np.float64)
    flags = rng.integers(0, 2, size=(days, 2)).astype(np.float64)
    X = np.column_stack([_weekday_holiday(days, start_weekday), flags])
    return Dataset(X, demand.reshape(-1, 1), TABLE1_FEATURES)


def group_blocks(data):
    """Partition rows by identical feature vectors, in first-seen order."""
    groups = {}
    for i, row in enumerate(data.features):
        groups.setdefault(tuple(row.tolist()), []).append(i)
    return [Block(k, tuple(v)) for k, v in groups.items()]


def sample_blocks(data, blocks, count, rng):
    """Rows of ``count`` blocks drawn without replacement, block by block."""
    if count > len(blocks):
        raise ValueError(f"cannot draw {count} blocks from {len(blocks)}")
    if count < 1:
        raise ValueError("count must be >= 1")
    picks = rng.choice(len(blocks), size=count, replace=False)
    rows = [i for b in picks for i in blocks[b].row_indices]
    return data.take(rows)


def inject_outliers(data, threshold=60.0, factor=10.0, rng=None, subset=None):
    """Multiply demands above ``threshold`` by ``factor`` within a random subset.

    ``subset`` rows are drawn without replacement (all rows when None);
    only those rows are eligible. Returns the full transformed dataset
    and a boolean mask of the rows that were changed.
    """
    if not (threshold > 0 and factor > 0):
        raise ValueError("threshold and factor must be positive")
    n = data.n_rows
    subset = n if subset is None else int(subset)
    if not 0 < subset <= n:
        raise ValueError(f"subset must be in [1, {n}], got {subset}")
    rng = rng if rng is not None else make_rng(0)
    eligible = np.zeros(n, dtype=bool)
    eligible[rng.choice(n, size=subset, replace=False)] = True
    hit = (data.demands > threshold) & eligible[:, None]
    D = np.where(hit, data.demands * factor, data.demands)
    return data.with_demands(D), hit.any(axis=1)

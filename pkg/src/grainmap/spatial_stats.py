"""Distance-class statistics, grain sizes, and CSV emission.

Bins are half-open [lo + k*step, lo + (k+1)*step); records below lo or at or
beyond hi are dropped.  Values inside each bin are sorted before the mean
and quantiles are taken, so results are bitwise independent of record order.
Quantiles are type 7 (linear interpolation of order statistics).  All reals
are printed with 9 significant digits; statistics of empty bins are emitted
as missing values.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyBin, SpecViolation

QUANTILE_PS = (0.01, 0.25, 0.50, 0.75, 0.99)

BIN_COLUMNS = ("bin_lo", "bin_hi", "count", "mean", "q01", "q25", "q50",
               "q75", "q99")


def quantile(values, p: float) -> float:
    values = np.asarray(values, np.float64)
    if values.size == 0:
        raise EmptyBin("quantile of an empty value set")
    if not 0.0 <= p <= 1.0:
        raise SpecViolation(f"quantile order {p} outside [0, 1]")
    return float(np.quantile(values, p, method="linear"))


@dataclass
class DistanceBinning:
    lo: float
    hi: float
    step: float
    edges: np.ndarray                     # (K+1,)
    counts: np.ndarray                    # (K,) int64
    stats: dict = field(default_factory=dict)  # name -> (K, 6) mean,q01..q99
    n_total: int = 0
    n_dropped: int = 0

    @property
    def n_bins(self) -> int:
        return self.counts.shape[0]


def bin_records(distance: np.ndarray, scalars: dict, lo: float = 0.0,
                hi: float = 24.0, step: float = 0.2) -> DistanceBinning:
    if not step > 0.0:
        raise SpecViolation(f"step must be positive, got {step}")
    if not hi > lo:
        raise SpecViolation(f"need hi > lo, got [{lo}, {hi}]")
    d = np.asarray(distance, np.float64)
    n_bins = int(np.ceil((hi - lo) / step - 1e-12))
    edges = lo + np.arange(n_bins + 1) * step
    keep = (d >= lo) & (d < hi)
    idx = np.floor((d[keep] - lo) / step).astype(np.int64)
    np.minimum(idx, n_bins - 1, out=idx)
    counts = np.bincount(idx, minlength=n_bins)
    order = np.argsort(idx, kind="stable")
    bounds = np.zeros(n_bins + 1, np.int64)
    np.cumsum(counts, out=bounds[1:])
    out = DistanceBinning(float(lo), float(hi), float(step), edges, counts,
                          n_total=int(d.size),
                          n_dropped=int(d.size - keep.sum()))
    ps = np.array(QUANTILE_PS)
    for name, vals in scalars.items():
        v = np.asarray(vals, np.float64)[keep][order]
        table = np.full((n_bins, 6), np.nan)
        for b in range(n_bins):
            sl = v[bounds[b]:bounds[b + 1]]
            if sl.size == 0:
                continue
            sl = np.sort(sl)
            table[b, 0] = sl.mean()
            table[b, 1:] = np.quantile(sl, ps, method="linear")
        out.stats[name] = table
    return out


@dataclass
class GrainSizeDistribution:
    sizes: np.ndarray       # (G,) int64 member points per grain
    hist_sizes: np.ndarray  # unique size values, ascending
    hist_counts: np.ndarray # grains per size value


def grain_sizes(partition) -> GrainSizeDistribution:
    sizes = np.bincount(partition.labels, minlength=partition.n_grains)
    uniq, cnt = np.unique(sizes, return_counts=True)
    return GrainSizeDistribution(sizes.astype(np.int64), uniq, cnt)


def _fmt(x: float) -> str:
    if not np.isfinite(x):
        return ""
    return f"{x:.9g}"


def write_binning_csv(binning: DistanceBinning, scalar: str, path) -> None:
    table = binning.stats[scalar]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BIN_COLUMNS)
        for b in range(binning.n_bins):
            row = [_fmt(binning.edges[b]), _fmt(binning.edges[b + 1]),
                   str(int(binning.counts[b]))]
            row.extend(_fmt(x) for x in table[b])
            w.writerow(row)


def write_grain_sizes_csv(dist: GrainSizeDistribution, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("grain_id", "n_points"))
        for g, n in enumerate(dist.sizes):
            w.writerow((str(g), str(int(n))))


def write_flow_curve_csv(rows, path) -> None:
    """Rows of (strain_label, eps_vm_bar, sigma_vm_bar), presorted."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("strain_label", "eps_vm_bar", "sigma_vm_bar"))
        for label, evm, svm in rows:
            w.writerow((_fmt(label), _fmt(evm), _fmt(svm)))

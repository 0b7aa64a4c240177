"""State reconstruction from two-channel heterodyne records.

Pipeline: bin the four measured quadratures (X1, P1, X2, P2) into 2D
histograms for the six axis pairs (pump on and pump off), extract first and
second moments (Sheppard-corrected), calibrate per-channel scale factors off
the pump-off reference, subtract the reference moments to remove the
detection chain, assemble the 4x4 covariance of the underlying mode pair,
fit the squeezing model, and evaluate Wigner marginals on a grid.  Histogram
and streaming-moment accumulators are mergeable so record streams can be
processed in shards.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, NamedTuple

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import least_squares

from .detection import RecordBatch
from .errors import (
    DegenerateReferenceError,
    InvalidCovarianceError,
    NoConvergenceError,
    RangeTooSmallError,
    UnphysicalStateError,
)
from .gaussian import (
    GaussianState,
    symplectic_form,
    tms_theory_covariance,
    wigner,
    witness,
)

AXIS_LABELS = ("X1", "P1", "X2", "P2")
_AXIS_INDEX = {label: k for k, label in enumerate(AXIS_LABELS)}

# The six distinct axis pairs; together they cover every off-diagonal moment
# exactly once and every variance three times.
PAIR_LABELS = (
    ("X1", "P1"),
    ("X2", "P2"),
    ("X1", "P2"),
    ("X2", "P1"),
    ("X1", "X2"),
    ("P1", "P2"),
)

_MOMENT_BLOCK = 1 << 20
_WARN_PHYSICALITY_TOL = 1e-6


# ---------------------------------------------------------------------------
# binning and histograms


@dataclass(frozen=True)
class Binning:
    """Shared square binning for all four quadrature axes."""

    lo: float
    hi: float
    bins: int = 128

    def __post_init__(self) -> None:
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValueError("binning range must be finite")
        if not self.hi > self.lo:
            raise ValueError("binning range must have hi > lo")
        if self.bins < 2:
            raise ValueError("need at least 2 bins per axis")

    @property
    def edges(self) -> NDArray[np.float64]:
        return np.linspace(self.lo, self.hi, self.bins + 1)

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.bins

    def index(self, values: NDArray[np.float64]):
        """Bin index per value plus an in-range mask.

        Values exactly at the upper edge land in the last bin, so the rule is
        a pure function of (value, lo, hi, bins) and shard merges are exact.
        """
        inside = (values >= self.lo) & (values <= self.hi)
        idx = ((values - self.lo) / self.width).astype(np.int64)
        np.clip(idx, 0, self.bins - 1, out=idx)
        return idx, inside


def auto_binning(
    batch: RecordBatch,
    bins: int = 128,
    sigmas: float = 6.0,
    prefix_records: int = 10_000,
) -> Binning:
    """Square range +-sigmas * (largest per-axis std of a record prefix)."""
    m = min(len(batch), prefix_records)
    if m < 2:
        raise DegenerateReferenceError("need at least 2 records to choose a range")
    q = np.empty((m, 4))
    q[:, 0] = batch.s1.real[:m]
    q[:, 1] = batch.s1.imag[:m]
    q[:, 2] = batch.s2.real[:m]
    q[:, 3] = batch.s2.imag[:m]
    sigma = float(np.max(q.std(axis=0)))
    if not np.isfinite(sigma) or sigma <= 0.0:
        raise DegenerateReferenceError("record prefix has no spread")
    half = sigmas * sigma
    return Binning(lo=-half, hi=half, bins=bins)


@dataclass
class Histogram2D:
    """Counts of one quadrature pair on a rectangular grid.

    Records falling outside either axis range are tallied in `overflow`, so
    counts.sum() + overflow == n_total always holds.
    """

    labels: tuple[str, str]
    edges_x: NDArray[np.float64]
    edges_y: NDArray[np.float64]
    counts: NDArray[np.int64]
    n_total: int = 0
    overflow: int = 0

    def __post_init__(self) -> None:
        if tuple(self.labels) not in PAIR_LABELS:
            raise ValueError(f"unknown axis pair {self.labels!r}")
        for edges in (self.edges_x, self.edges_y):
            if edges.ndim != 1 or edges.size < 3 or np.any(np.diff(edges) <= 0):
                raise ValueError("edges must be strictly increasing, >= 2 bins")
        if self.counts.shape != (self.edges_x.size - 1, self.edges_y.size - 1):
            raise ValueError("counts shape does not match edges")
        if np.any(self.counts < 0) or self.overflow < 0:
            raise ValueError("counts must be non-negative")
        if int(self.counts.sum()) + self.overflow != self.n_total:
            raise ValueError("counts + overflow must equal n_total")

    @classmethod
    def empty(cls, labels: tuple[str, str], binning: Binning) -> "Histogram2D":
        edges = binning.edges
        n = binning.bins
        return cls(labels, edges, edges.copy(), np.zeros((n, n), np.int64))

    def merge(self, other: "Histogram2D") -> "Histogram2D":
        if tuple(self.labels) != tuple(other.labels):
            raise ValueError("cannot merge histograms of different axis pairs")
        if not (
            np.array_equal(self.edges_x, other.edges_x)
            and np.array_equal(self.edges_y, other.edges_y)
        ):
            raise ValueError("cannot merge histograms with different edges")
        return Histogram2D(
            self.labels,
            self.edges_x,
            self.edges_y,
            self.counts + other.counts,
            self.n_total + other.n_total,
            self.overflow + other.overflow,
        )

    def to_json_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "edges_x": [float(e) for e in self.edges_x],
            "edges_y": [float(e) for e in self.edges_y],
            "counts": self.counts.tolist(),
            "n_total": int(self.n_total),
            "overflow": int(self.overflow),
        }

    def to_csv(self, path) -> None:
        """Edges rows first, then one counts row per x bin."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("axis_x", self.labels[0]))
            writer.writerow(("axis_y", self.labels[1]))
            writer.writerow(("n_total", self.n_total))
            writer.writerow(("overflow", self.overflow))
            writer.writerow(["edges_x"] + [repr(float(e)) for e in self.edges_x])
            writer.writerow(["edges_y"] + [repr(float(e)) for e in self.edges_y])
            for row in self.counts:
                writer.writerow([int(c) for c in row])


def _iter_quadrature_blocks(records) -> Iterator[NDArray[np.float64]]:
    if isinstance(records, RecordBatch):
        yield from records.chunks()
        return
    arr = np.asarray(records, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[1] == 4:
        for start in range(0, arr.shape[0], _MOMENT_BLOCK):
            yield arr[start : start + _MOMENT_BLOCK]
        return
    raise TypeError("records must be a RecordBatch or an (n, 4) quadrature array")


def accumulate_histograms(records, binning: Binning) -> dict[tuple[str, str], Histogram2D]:
    """One pass over the records filling all six pair histograms."""
    hists = {pair: Histogram2D.empty(pair, binning) for pair in PAIR_LABELS}
    nbins = binning.bins
    for block in _iter_quadrature_blocks(records):
        m = block.shape[0]
        idx = []
        inside = []
        for col in range(4):
            i, ok = binning.index(block[:, col])
            idx.append(i)
            inside.append(ok)
        for pair in PAIR_LABELS:
            a = _AXIS_INDEX[pair[0]]
            b = _AXIS_INDEX[pair[1]]
            ok = inside[a] & inside[b]
            lin = idx[a][ok] * nbins + idx[b][ok]
            h = hists[pair]
            h.counts += np.bincount(lin, minlength=nbins * nbins).reshape(
                nbins, nbins
            )
            kept = int(ok.sum())
            h.n_total += m
            h.overflow += m - kept
    return hists


class HistogramMoments(NamedTuple):
    mean_x: float
    mean_y: float
    var_x: float
    var_y: float
    cov: float


def moments_from_histogram(h: Histogram2D) -> HistogramMoments:
    """Bin-center moments with Sheppard's correction on the variances.

    The correction removes the leading binning bias; it can push a degenerate
    variance below zero, in which case the variance clamps to 0.  The
    covariance is left uncorrected.
    """
    inside = h.n_total - h.overflow
    if inside <= 1:
        raise DegenerateReferenceError("histogram holds fewer than 2 in-range records")
    if h.overflow / h.n_total >= 0.01:
        raise RangeTooSmallError(
            f"{h.overflow}/{h.n_total} records overflow the histogram range"
        )
    cx = 0.5 * (h.edges_x[:-1] + h.edges_x[1:])
    cy = 0.5 * (h.edges_y[:-1] + h.edges_y[1:])
    wx = float(np.mean(np.diff(h.edges_x)))
    wy = float(np.mean(np.diff(h.edges_y)))
    counts = h.counts.astype(np.float64)
    col = counts.sum(axis=1)
    row = counts.sum(axis=0)
    mean_x = float(col @ cx) / inside
    mean_y = float(row @ cy) / inside
    var_x = float(col @ (cx - mean_x) ** 2) / inside - wx**2 / 12.0
    var_y = float(row @ (cy - mean_y) ** 2) / inside - wy**2 / 12.0
    cov = float((cx - mean_x) @ counts @ (cy - mean_y)) / inside
    return HistogramMoments(
        mean_x, mean_y, max(var_x, 0.0), max(var_y, 0.0), cov
    )


# ---------------------------------------------------------------------------
# moment sets


@dataclass(frozen=True)
class MomentSet:
    """First and second moments of the four measured quadratures."""

    mean: NDArray[np.float64]
    cov: NDArray[np.float64]
    n: int

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64).copy()
        cov = np.asarray(self.cov, dtype=np.float64).copy()
        if mean.shape != (4,) or cov.shape != (4, 4):
            raise InvalidCovarianceError("moment set must hold 4 means and a 4x4 cov")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InvalidCovarianceError("moments must be finite")
        cov = 0.5 * (cov + cov.T)
        var = np.diag(cov)
        if np.any(var < 0.0):
            raise InvalidCovarianceError("variances must be non-negative")
        bound = np.sqrt(np.outer(var, var))
        if np.any(np.abs(cov) > bound * (1.0 + 1e-9) + 1e-12):
            raise InvalidCovarianceError("covariances violate Cauchy-Schwarz")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def variances(self) -> NDArray[np.float64]:
        return np.diag(self.cov)


class MomentAccumulator:
    """Streaming (and mergeable) moment sums over 4-column blocks."""

    __slots__ = ("n", "sums", "products")

    def __init__(self) -> None:
        self.n = 0
        self.sums = np.zeros(4)
        self.products = np.zeros((4, 4))

    def update(self, block: NDArray[np.float64]) -> "MomentAccumulator":
        block = np.asarray(block, dtype=np.float64)
        if block.ndim != 2 or block.shape[1] != 4:
            raise ValueError("block must be (n, 4)")
        self.n += block.shape[0]
        self.sums += block.sum(axis=0)
        self.products += block.T @ block
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        self.n += other.n
        self.sums += other.sums
        self.products += other.products
        return self

    def finalize(self) -> MomentSet:
        if self.n < 2:
            raise DegenerateReferenceError("need at least 2 records for moments")
        mean = self.sums / self.n
        cov = self.products / self.n - np.outer(mean, mean)
        return MomentSet(mean, 0.5 * (cov + cov.T), self.n)


def accumulate_moments(records) -> MomentSet:
    acc = MomentAccumulator()
    for block in _iter_quadrature_blocks(records):
        acc.update(block)
    return acc.finalize()


def moment_set_from_histograms(
    hists: Mapping[tuple[str, str], Histogram2D] | Iterable[Histogram2D],
) -> MomentSet:
    """Assemble the 4x4 measured moments from the six pair histograms.

    Each variance appears in three histograms; the estimates are averaged.
    Each covariance appears in exactly one.
    """
    if isinstance(hists, Mapping):
        table = {tuple(k): v for k, v in hists.items()}
    else:
        table = {tuple(h.labels): h for h in hists}
    missing = [p for p in PAIR_LABELS if p not in table]
    if missing:
        raise ValueError(f"missing histograms for pairs {missing}")
    moments = {pair: moments_from_histogram(table[pair]) for pair in PAIR_LABELS}
    mean = np.zeros(4)
    cov = np.zeros((4, 4))
    hits = np.zeros(4)
    for pair, m in moments.items():
        a = _AXIS_INDEX[pair[0]]
        b = _AXIS_INDEX[pair[1]]
        mean[a] += m.mean_x
        mean[b] += m.mean_y
        cov[a, a] += m.var_x
        cov[b, b] += m.var_y
        hits[a] += 1.0
        hits[b] += 1.0
        cov[a, b] = m.cov
        cov[b, a] = m.cov
    mean /= hits
    for k in range(4):
        cov[k, k] /= hits[k]
    n = max(h.n_total for h in table.values())
    return MomentSet(mean, cov, n)


# ---------------------------------------------------------------------------
# calibration, deconvolution, fitting


def calibrate(
    moments_off: MomentSet, n_noise: float | tuple[float, float]
) -> tuple[float, float]:
    """Per-channel scale factors from the pump-off reference.

    With the pump off each quadrature carries the vacuum signal plus the
    chain's thermal mode, variance (2 n_noise + 2)/4 in calibrated units;
    g_k = sqrt(target / measured) rescales channel k onto that target.
    """
    pair = (n_noise, n_noise) if np.isscalar(n_noise) else tuple(n_noise)
    if len(pair) != 2 or any(n < 0 for n in pair):
        raise ValueError("n_noise must be a photon number or a pair of them")
    var = moments_off.variances
    scales = []
    for k, n_k in enumerate(pair):
        measured = 0.5 * (var[2 * k] + var[2 * k + 1])
        if not np.isfinite(measured) or measured <= 0.0:
            raise DegenerateReferenceError(
                f"pump-off variance of channel {k + 1} is degenerate"
            )
        target = (2.0 * n_k + 2.0) / 4.0
        scales.append(float(np.sqrt(target / measured)))
    return (scales[0], scales[1])


def apply_scale(ms: MomentSet, scales: tuple[float, float]) -> MomentSet:
    g = np.array([scales[0], scales[0], scales[1], scales[1]])
    if np.any(~np.isfinite(g)) or np.any(g <= 0):
        raise ValueError("scale factors must be positive and finite")
    return MomentSet(ms.mean * g, ms.cov * np.outer(g, g), ms.n)


def deconvolve(moments_on: MomentSet, moments_off: MomentSet) -> NDArray[np.float64]:
    """Covariance of the mode pair: reference-subtract, restore vacuum.

    Diagonal: Var_on - Var_off + 1/4 (removes the chain's thermal mode and
    puts back the vacuum half-quantum the reference subtraction took out).
    Off-diagonal: Cov_on - Cov_off, cancelling any common systematic.
    """
    v = moments_on.cov - moments_off.cov + 0.25 * np.eye(4)
    return 0.5 * (v + v.T)


_UPPER = np.triu_indices(4)


def _model_upper(r: float, n_add: float) -> NDArray[np.float64]:
    d = np.cosh(2.0 * r) / 4.0 + n_add / 2.0
    s = np.sinh(2.0 * r) / 4.0
    # upper-triangle order: (0,0)(0,1)(0,2)(0,3)(1,1)(1,2)(1,3)(2,2)(2,3)(3,3)
    return np.array([d, 0.0, s, 0.0, d, 0.0, -s, d, 0.0, d])


@dataclass(frozen=True)
class SqueezingFit:
    """Two-parameter and pure-state fits of the squeezing model."""

    r: float
    n_add: float
    residual: float
    r_pure: float
    residual_pure: float


def fit_squeezing(v: NDArray[np.float64]) -> SqueezingFit:
    """Least squares of the 10 independent covariance entries.

    Model: diagonal cosh(2r)/4 + n_add/2, <x1 x2> = sinh(2r)/4,
    <p1 p2> = -sinh(2r)/4, every other entry 0; r >= 0 and n_add >= 0.  The
    pure-state variant freezes n_add = 0.  Unweighted residuals.

    The objective only sees the data through dbar = mean(diagonal) and
    w = (<x1 x2> - <p1 p2>)/2, so the two-parameter problem separates: for
    any r the diagonal term is zeroed by n_add = 2 (dbar - cosh(2r)/4)
    whenever that is non-negative, leaving r = arcsinh(4 max(w, 0))/2 as the
    global minimizer.  If the implied n_add is negative the constraint is
    active and the solution coincides with the pure-state fit, which is a
    smooth one-parameter problem solved numerically from deterministic
    starting points.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (4, 4):
        raise InvalidCovarianceError("covariance must be 4x4")
    if not np.all(np.isfinite(v)):
        raise InvalidCovarianceError("covariance entries must be finite")
    scale = max(1.0, float(np.max(np.abs(v))))
    if np.max(np.abs(v - v.T)) > 1e-8 * scale:
        raise InvalidCovarianceError("covariance must be symmetric")
    v = 0.5 * (v + v.T)
    data = v[_UPPER]
    d_bar = float(np.mean(np.diag(v)))
    w = float((v[0, 2] - v[1, 3]) / 2.0)
    r_cross = float(np.arcsinh(4.0 * max(w, 0.0)) / 2.0)

    def resid_pure(params):
        return _model_upper(params[0], 0.0) - data

    # pure fit: polish from both data-implied starts and keep the better
    starts = {r_cross, float(np.arccosh(max(4.0 * d_bar, 1.0)) / 2.0)}
    best = None
    for r0 in sorted(starts):
        res = least_squares(
            resid_pure,
            [r0],
            bounds=([0.0], [np.inf]),
            method="trf",
            xtol=1e-14,
            ftol=1e-14,
            gtol=1e-14,
            max_nfev=2000,
        )
        if res.status <= 0:
            raise NoConvergenceError(f"squeezing fit failed: {res.message}")
        if best is None or res.cost < best.cost:
            best = res
    r_pure = float(best.x[0])
    # trf starts strictly inside the feasible box; snap back if the bound wins
    if np.linalg.norm(resid_pure([0.0])) <= np.linalg.norm(best.fun):
        r_pure = 0.0
    residual_pure = float(np.linalg.norm(resid_pure([r_pure])))

    n_interior = 2.0 * (d_bar - np.cosh(2.0 * r_cross) / 4.0)
    if n_interior >= 0.0:
        r_full, n_full = r_cross, float(n_interior)
    else:
        r_full, n_full = r_pure, 0.0
    return SqueezingFit(
        r=r_full,
        n_add=n_full,
        residual=float(np.linalg.norm(_model_upper(r_full, n_full) - data)),
        r_pure=r_pure,
        residual_pure=residual_pure,
    )


# ---------------------------------------------------------------------------
# reconstruction


@dataclass(frozen=True)
class WignerGrid:
    """Square evaluation grid for 2D Wigner marginals."""

    extent: float = 8.0
    points: int = 101

    def __post_init__(self) -> None:
        if not np.isfinite(self.extent) or self.extent <= 0:
            raise ValueError("extent must be positive")
        if self.points < 2:
            raise ValueError("need at least 2 grid points")

    @property
    def axis(self) -> NDArray[np.float64]:
        return np.linspace(-self.extent, self.extent, self.points)


@dataclass(frozen=True)
class WignerMarginal:
    labels: tuple[str, str]
    x: NDArray[np.float64]
    y: NDArray[np.float64]
    measured: NDArray[np.float64]
    ideal: NDArray[np.float64]

    def to_csv(self, path, column: str = "measured") -> None:
        dens = getattr(self, column)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow((self.labels[0].lower(), self.labels[1].lower(), "density"))
            for i, xv in enumerate(self.x):
                for j, yv in enumerate(self.y):
                    writer.writerow(
                        (repr(float(xv)), repr(float(yv)), repr(float(dens[i, j])))
                    )


@dataclass(frozen=True)
class TomographyResult:
    v: NDArray[np.float64]
    r_fit: float
    n_add_fit: float
    residual: float
    r_fit_pure: float
    residual_pure: float
    witness_d: float
    scale_factors: tuple[float, float] | None
    n_records: tuple[int, int] | None
    marginals: Mapping[str, WignerMarginal]

    def to_json_dict(self) -> dict:
        return {
            "v": [float(x) for x in np.asarray(self.v).reshape(-1)],
            "r_fit": float(self.r_fit),
            "r_fit_pure": float(self.r_fit_pure),
            "n_add_fit": float(self.n_add_fit),
            "residual": float(self.residual),
            "residual_pure": float(self.residual_pure),
            "witness_d": float(self.witness_d),
            "scale_factors": (
                None
                if self.scale_factors is None
                else [float(g) for g in self.scale_factors]
            ),
            "n_records": (
                None if self.n_records is None else [int(n) for n in self.n_records]
            ),
        }

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _marginal_density(
    cov: NDArray[np.float64], pair: tuple[int, int], grid: WignerGrid
) -> NDArray[np.float64]:
    sub = cov[np.ix_(pair, pair)].copy()
    # A marginally indefinite estimate (sampling noise around a pure state)
    # has no density; clamp the block's eigenvalues for evaluation only, the
    # reported covariance stays untouched.
    evals, evecs = np.linalg.eigh(0.5 * (sub + sub.T))
    floor = 1e-6 * max(float(np.mean(np.diag(cov))), 1e-6)
    if evals[0] < floor:
        sub = evecs @ np.diag(np.maximum(evals, floor)) @ evecs.T
        sub = 0.5 * (sub + sub.T)
    state = GaussianState(1, np.zeros(2), sub)
    ax = grid.axis
    xx, yy = np.meshgrid(ax, ax, indexing="ij")
    pts = np.stack([xx, yy], axis=-1)
    return wigner(state, pts)


_MARGINAL_PAIRS = {"x1_p1": (0, 1), "x1_x2": (0, 2)}


def reconstruct(
    v: NDArray[np.float64],
    grid: WignerGrid | None = None,
    scale_factors: tuple[float, float] | None = None,
    n_records: tuple[int, int] | None = None,
) -> TomographyResult:
    """Package the estimated covariance into fits, witness, and marginals.

    A slightly indefinite estimate (statistical fluctuation around a pure
    state) is tolerated with a warning; an indefiniteness on the scale of the
    covariance itself aborts, since no amount of sampling noise explains it.
    The ideal comparison marginal is the pure squeezed-vacuum model evaluated
    at the fitted r.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (4, 4) or not np.all(np.isfinite(v)):
        raise InvalidCovarianceError("covariance must be a finite 4x4 matrix")
    v = 0.5 * (v + v.T)
    if grid is None:
        grid = WignerGrid()

    omega = symplectic_form(2)
    min_eig = float(np.min(np.linalg.eigvalsh(v + 0.25j * omega)).real)
    hard_tol = max(_WARN_PHYSICALITY_TOL, 0.01 * float(np.mean(np.diag(v))))
    if min_eig < -hard_tol:
        raise UnphysicalStateError(
            f"estimated covariance is unphysical (min eigenvalue {min_eig:.3e})"
        )
    if min_eig < -_WARN_PHYSICALITY_TOL:
        warnings.warn(
            f"estimated covariance marginally unphysical "
            f"(min eigenvalue {min_eig:.3e}); proceeding",
            RuntimeWarning,
            stacklevel=2,
        )

    fit = fit_squeezing(v)
    state = GaussianState(2, np.zeros(4), v)
    d = witness(state)
    ideal_cov = tms_theory_covariance(fit.r, 0.0).cov
    marginals = {}
    for name, pair in _MARGINAL_PAIRS.items():
        labels = (AXIS_LABELS[pair[0]], AXIS_LABELS[pair[1]])
        marginals[name] = WignerMarginal(
            labels=labels,
            x=grid.axis,
            y=grid.axis,
            measured=_marginal_density(v, pair, grid),
            ideal=_marginal_density(ideal_cov, pair, grid),
        )
    return TomographyResult(
        v=v,
        r_fit=fit.r,
        n_add_fit=fit.n_add,
        residual=fit.residual,
        r_fit_pure=fit.r_pure,
        residual_pure=fit.residual_pure,
        witness_d=d,
        scale_factors=scale_factors,
        n_records=n_records,
        marginals=marginals,
    )


# ---------------------------------------------------------------------------
# end-to-end estimation


@dataclass(frozen=True)
class EstimationResult:
    """Pipeline outputs: reconstruction plus the intermediate artifacts."""

    tomography: TomographyResult
    binning: Binning | None
    histograms_on: dict | None
    histograms_off: dict | None
    moments_on: MomentSet
    moments_off: MomentSet
    scale_factors: tuple[float, float]


def estimate_state(
    records_on: RecordBatch,
    records_off: RecordBatch,
    n_noise: float | tuple[float, float],
    method: str = "histogram",
    bins: int = 128,
    bin_sigmas: float = 6.0,
    prefix_records: int = 10_000,
    grid: WignerGrid | None = None,
) -> EstimationResult:
    """Records to reconstructed state in one call.

    method "histogram" goes through the six pair histograms per pump setting
    (the export path); "streaming" accumulates exact moments directly.  Both
    calibrate on the pump-off records, subtract them, and fit.
    """
    if method not in ("histogram", "streaming"):
        raise ValueError("method must be 'histogram' or 'streaming'")
    binning = None
    hists_on = hists_off = None
    if method == "histogram":
        binning = auto_binning(
            records_on, bins=bins, sigmas=bin_sigmas, prefix_records=prefix_records
        )
        hists_on = accumulate_histograms(records_on, binning)
        hists_off = accumulate_histograms(records_off, binning)
        raw_on = moment_set_from_histograms(hists_on)
        raw_off = moment_set_from_histograms(hists_off)
    else:
        raw_on = accumulate_moments(records_on)
        raw_off = accumulate_moments(records_off)
    scales = calibrate(raw_off, n_noise)
    on = apply_scale(raw_on, scales)
    off = apply_scale(raw_off, scales)
    v = deconvolve(on, off)
    result = reconstruct(
        v,
        grid=grid,
        scale_factors=scales,
        n_records=(len(records_on), len(records_off)),
    )
    return EstimationResult(
        tomography=result,
        binning=binning,
        histograms_on=hists_on,
        histograms_off=hists_off,
        moments_on=on,
        moments_off=off,
        scale_factors=scales,
    )

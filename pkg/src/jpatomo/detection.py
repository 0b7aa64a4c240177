"""Two-channel heterodyne detection of the amplified sidebands.

Digital filters f1 (signal channel, centered at +offset) and f2 (idler
channel, the exact mirror f2(delta) = f1(-delta)) select a pair of canonical
temporal modes out of the amplifier output.  The pair (b1, b2) is Gaussian;
its second moments follow from the per-sideband-pair scattering
b_out(d) = A_d b_in(d) + B_d b_in^dagger(-d).  Measurement records are the
complex samples S_k = gain_k * [(x_k + x_h,k) + i (p_k - p_h,k)] with h a
thermal auxiliary mode carrying the detection-chain noise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np
from numpy.typing import NDArray

from .device import GainProfile, gain
from .errors import (
    InternalConsistencyError,
    InvalidGridError,
    UnsupportedFilterError,
)
from .gaussian import GaussianState, _cholesky_with_jitter, vacuum_state

FILTER_SHAPES = ("boxcar-notch", "raised-cosine-notch")

_NORMALIZATION_TOL = 1e-10
_MEASURE_CHUNK = 1 << 20


@dataclass(frozen=True)
class FilterSpec:
    """Filter pair on a uniform, symmetric detuning grid.

    `weights` holds f1 on `grid`; the idler filter is the array reversal
    (exact mirror, since the grid is antisymmetric by construction).  The
    squared weights integrate to 1 (Riemann sum, tol 1e-10) and the weight at
    the pump bin delta = 0 is exactly zero.
    """

    offset: float
    grid: NDArray[np.float64]
    weights: NDArray[np.complex128]

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=np.float64).copy()
        weights = np.asarray(self.weights, dtype=np.complex128).copy()
        if grid.ndim != 1 or grid.size < 3 or grid.size % 2 == 0:
            raise UnsupportedFilterError("grid must be 1-D with odd size >= 3")
        if weights.shape != grid.shape:
            raise UnsupportedFilterError("weights and grid shapes differ")
        steps = np.diff(grid)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise UnsupportedFilterError("grid must be uniform")
        if np.max(np.abs(grid + grid[::-1])) > 1e-9 * np.max(np.abs(grid)):
            raise UnsupportedFilterError("grid must be symmetric about zero")
        norm = np.sum(np.abs(weights) ** 2) * self.spacing_of(grid)
        if abs(norm - 1.0) > _NORMALIZATION_TOL:
            raise ValueError(f"filter normalization {norm} deviates from 1")
        if weights[grid.size // 2] != 0.0:
            raise ValueError("weight at the pump bin must be exactly zero")
        grid.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "weights", weights)

    @staticmethod
    def spacing_of(grid: NDArray[np.float64]) -> float:
        return float((grid[-1] - grid[0]) / (grid.size - 1))

    @property
    def spacing(self) -> float:
        return self.spacing_of(self.grid)

    @property
    def mirrored_weights(self) -> NDArray[np.complex128]:
        """Idler filter f2(delta) = f1(-delta)."""
        return self.weights[::-1]


def design_filter(
    offset: float,
    shape: str,
    width: float,
    grid_points: int = 2001,
    span: float | None = None,
) -> FilterSpec:
    """Build a normalized filter pair with an exact pump notch.

    shape is one of "boxcar-notch" (constant over [offset - width/2,
    offset + width/2] minus the pump bin) or "raised-cosine-notch" (cosine
    taper over the same support times the notch factor
    1 - exp(-delta^2 / (2 sigma_n^2)), sigma_n = width / 20).  The grid is
    uniform and symmetric, spans +-span (default offset + 3 width, the
    minimum accepted), and grid_points is rounded up to an odd count so a
    node sits exactly at delta = 0.
    """
    if width <= 0:
        raise ValueError("width must be > 0")
    if offset < 0:
        raise ValueError("offset must be >= 0")
    if shape not in FILTER_SHAPES:
        raise ValueError(f"unknown filter shape {shape!r}; use one of {FILTER_SHAPES}")
    min_span = offset + 3.0 * width
    if span is None:
        span = min_span
    if span < min_span * (1.0 - 1e-12):
        raise InvalidGridError(
            f"grid span {span} too narrow; need at least offset + 3*width = {min_span}"
        )
    n = int(grid_points)
    if n < 3:
        raise ValueError("grid_points must be >= 3")
    if n % 2 == 0:
        n += 1
    half = n // 2
    spacing = span / half
    # Antisymmetric by construction: grid[i] = -grid[n-1-i] exactly.
    grid = (np.arange(n) - half) * spacing

    u = (grid - offset) / (width / 2.0)
    if shape == "boxcar-notch":
        w = np.where(np.abs(u) <= 1.0, 1.0, 0.0)
    else:
        sigma_n = width / 20.0
        taper = np.where(np.abs(u) <= 1.0, np.cos(np.pi * u / 2.0) ** 2, 0.0)
        w = taper * (1.0 - np.exp(-(grid**2) / (2.0 * sigma_n**2)))
    w[half] = 0.0  # pump bin carries an exact zero
    mass = np.sum(w**2) * spacing
    if mass <= 0.0:
        raise InvalidGridError("filter support does not intersect the grid")
    w = w / np.sqrt(mass)
    return FilterSpec(offset=offset, grid=grid, weights=w.astype(np.complex128))


def predicted_r(filt: FilterSpec, profile: GainProfile) -> float:
    """Squeezing parameter from the filtered gain: cosh^2 r = int |f1|^2 G."""
    integral = float(
        np.trapezoid(np.abs(filt.weights) ** 2 * gain(filt.grid, profile), filt.grid)
    )
    if integral < 1.0 - 1e-9:
        raise InternalConsistencyError(
            f"filtered gain integral {integral} below 1; gain profile is unphysical"
        )
    return float(np.arccosh(np.sqrt(max(integral, 1.0))))


def output_two_mode_state(
    profile: GainProfile, filt: FilterSpec, input_thermal: float = 0.0
) -> GaussianState:
    """Exact Gaussian state of the filtered mode pair (b1, b2).

    Decomposes the grid into symmetric sideband pairs (delta, -delta), each
    transforming independently with (A_delta, B_delta), and accumulates the
    filtered second moments:

        <b1^dag b1> = int |f1|^2 [(G-1)(1 + nbar) + G nbar]
        <b1 b2>     = int f1(d) f2(-d) A_d B_d (1 + 2 nbar)
        <b1 b1>     = int f1(d) f1(-d) A_d B_d (1 + 2 nbar)
        <b1 b2^dag> = int f1(d) f2*(d) [G (1 + nbar) + (G-1) nbar]

    For vacuum input and non-overlapping mirror filters only the first two
    survive and the diagonal equals cosh(2 predicted_r)/4 exactly; the cross
    covariance is bounded by the pure-state value sinh(2 predicted_r)/4
    (equality iff the gain is flat across the filter support).
    """
    if input_thermal < 0:
        raise ValueError("input_thermal must be >= 0")
    grid = filt.grid
    if np.max(np.abs(grid + grid[::-1])) > 1e-9 * np.max(np.abs(grid)):
        raise UnsupportedFilterError("filter grid lost its mirror symmetry")
    f1 = filt.weights
    f2 = filt.mirrored_weights
    g = gain(grid, profile)
    a_coef = np.sqrt(g)
    b_coef = np.sqrt(np.maximum(g - 1.0, 0.0))
    nbar = float(input_thermal)

    def integral(values) -> complex:
        return complex(np.trapezoid(values, grid))

    # f2(-delta) = f1(delta) and f1(-delta) = f2(delta) by mirror symmetry.
    occ = integral(np.abs(f1) ** 2 * ((g - 1.0) * (1.0 + nbar) + g * nbar))
    pair = integral(f1 * f1 * a_coef * b_coef) * (1.0 + 2.0 * nbar)
    self_pair = integral(f1 * f2 * a_coef * b_coef) * (1.0 + 2.0 * nbar)
    beam = integral(f1 * np.conj(f2) * (g * (1.0 + nbar) + (g - 1.0) * nbar))

    n1 = occ.real
    var_x = (2.0 * n1 + 1.0 + 2.0 * self_pair.real) / 4.0
    var_p = (2.0 * n1 + 1.0 - 2.0 * self_pair.real) / 4.0
    xp = self_pair.imag / 2.0
    x1x2 = (pair.real + beam.real) / 2.0
    p1p2 = (beam.real - pair.real) / 2.0
    x1p2 = (pair.imag - beam.imag) / 2.0
    p1x2 = (pair.imag + beam.imag) / 2.0
    cov = np.array(
        [
            [var_x, xp, x1x2, x1p2],
            [xp, var_p, p1x2, p1p2],
            [x1x2, p1x2, var_x, xp],
            [x1p2, p1p2, xp, var_p],
        ]
    )
    return GaussianState(2, np.zeros(4), cov)


@dataclass(frozen=True)
class DetectionConfig:
    """Measurement-chain settings.

    n_noise is the added noise of the output line in photons referred to the
    amplifier output (both channels; n_noise_ch2 overrides channel 2 when the
    chains differ).  gain_ch1/gain_ch2 are dimensionless record scalings,
    sample_period and lo_offset are carried for throughput metadata.
    """

    n_noise: float = 69.0
    n_noise_ch2: float | None = None
    gain_ch1: float = 1.0
    gain_ch2: float = 1.02
    sample_period: float = 10e-9
    lo_offset: float = 2.0 * np.pi * 5.0e6

    def __post_init__(self) -> None:
        if self.n_noise < 0:
            raise ValueError("n_noise must be >= 0")
        if self.n_noise_ch2 is not None and self.n_noise_ch2 < 0:
            raise ValueError("n_noise_ch2 must be >= 0")
        if self.gain_ch1 <= 0 or self.gain_ch2 <= 0:
            raise ValueError("channel gains must be > 0")
        if self.sample_period <= 0:
            raise ValueError("sample_period must be > 0")

    @property
    def noise_pair(self) -> tuple[float, float]:
        n2 = self.n_noise if self.n_noise_ch2 is None else self.n_noise_ch2
        return (self.n_noise, n2)


class MeasurementRecord(NamedTuple):
    """One simultaneous complex sample pair from the two channels."""

    s1: complex
    s2: complex


class RecordBatch:
    """Column store of measurement records (complex128 per channel)."""

    __slots__ = ("s1", "s2")

    def __init__(self, s1: NDArray[np.complex128], s2: NDArray[np.complex128]):
        s1 = np.asarray(s1, dtype=np.complex128)
        s2 = np.asarray(s2, dtype=np.complex128)
        if s1.shape != s2.shape or s1.ndim != 1:
            raise ValueError("s1 and s2 must be 1-D arrays of equal length")
        self.s1 = s1
        self.s2 = s2

    def __len__(self) -> int:
        return self.s1.size

    def __getitem__(self, idx: int) -> MeasurementRecord:
        return MeasurementRecord(complex(self.s1[idx]), complex(self.s2[idx]))

    def __iter__(self) -> Iterator[MeasurementRecord]:
        for k in range(len(self)):
            yield self[k]

    def quadratures(self) -> NDArray[np.float64]:
        """Measured quadratures as columns (X1, P1, X2, P2)."""
        out = np.empty((len(self), 4))
        out[:, 0] = self.s1.real
        out[:, 1] = self.s1.imag
        out[:, 2] = self.s2.real
        out[:, 3] = self.s2.imag
        return out

    def chunks(self, size: int = _MEASURE_CHUNK) -> Iterator[NDArray[np.float64]]:
        """Quadrature blocks of at most `size` records (bounded memory)."""
        for start in range(0, len(self), size):
            stop = min(start + size, len(self))
            block = np.empty((stop - start, 4))
            block[:, 0] = self.s1.real[start:stop]
            block[:, 1] = self.s1.imag[start:stop]
            block[:, 2] = self.s2.real[start:stop]
            block[:, 3] = self.s2.imag[start:stop]
            yield block

    # -- serialization: columns (re_s1, im_s1, re_s2, im_s2) ---------------

    _CSV_HEADER = ("re_s1", "im_s1", "re_s2", "im_s2")

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self._CSV_HEADER)
            for k in range(len(self)):
                writer.writerow(
                    (
                        repr(float(self.s1.real[k])),
                        repr(float(self.s1.imag[k])),
                        repr(float(self.s2.real[k])),
                        repr(float(self.s2.imag[k])),
                    )
                )

    @classmethod
    def load_csv(cls, path) -> "RecordBatch":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=np.float64)
        if data.size == 0:
            return cls(np.empty(0, np.complex128), np.empty(0, np.complex128))
        if data.shape[1] != 4:
            raise ValueError("record CSV must have 4 columns")
        return cls(data[:, 0] + 1j * data[:, 1], data[:, 2] + 1j * data[:, 3])

    def save_binary(self, path) -> None:
        """Little-endian float64 stream, record-major."""
        flat = np.empty((len(self), 4), dtype="<f8")
        flat[:, 0] = self.s1.real
        flat[:, 1] = self.s1.imag
        flat[:, 2] = self.s2.real
        flat[:, 3] = self.s2.imag
        with open(path, "wb") as fh:
            fh.write(flat.tobytes(order="C"))

    @classmethod
    def load_binary(cls, path) -> "RecordBatch":
        raw = np.fromfile(path, dtype="<f8")
        if raw.size % 4 != 0:
            raise ValueError("binary record stream length is not a multiple of 4")
        flat = raw.reshape(-1, 4).astype(np.float64)
        return cls(flat[:, 0] + 1j * flat[:, 1], flat[:, 2] + 1j * flat[:, 3])


def measure(
    state: GaussianState,
    config: DetectionConfig,
    n: int,
    seed: int,
    pump_on: bool = True,
    streams: int = 1,
) -> RecordBatch:
    """Synthesize n heterodyne records from the two-mode state.

    With the pump off the signal is replaced by vacuum.  The underlying
    standard-normal streams depend only on (seed, streams), *not* on the
    state or pump setting, so pump-on and pump-off runs taken with the same
    seed share their signal and auxiliary-noise draws; reference subtraction
    then cancels far more estimator variance than independent references
    would (the simulated analogue of an interleaved calibration).  Output is
    deterministic for fixed (seed, n, streams).
    """
    if state.n_modes != 2:
        raise ValueError("measure requires a 2-mode state")
    if n < 0:
        raise ValueError("n must be >= 0")
    if streams < 1:
        raise ValueError("streams must be >= 1")
    source = state if pump_on else vacuum_state(2)
    chol = _cholesky_with_jitter(source.cov)
    mean = source.mean
    n1, n2 = config.noise_pair
    noise_sd = np.array(
        [
            np.sqrt((2.0 * n1 + 1.0) / 4.0),
            np.sqrt((2.0 * n1 + 1.0) / 4.0),
            np.sqrt((2.0 * n2 + 1.0) / 4.0),
            np.sqrt((2.0 * n2 + 1.0) / 4.0),
        ]
    )
    s1 = np.empty(n, dtype=np.complex128)
    s2 = np.empty(n, dtype=np.complex128)

    base = n // streams
    extra = n % streams
    start = 0
    for k in range(streams):
        m = base + (1 if k < extra else 0)
        rng_sig = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(k, 0)))
        )
        rng_noise = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(k, 1)))
        )
        done = 0
        while done < m:
            step = min(_MEASURE_CHUNK, m - done)
            quads = mean + rng_sig.standard_normal((step, 4)) @ chol.T
            aux = rng_noise.standard_normal((step, 4)) * noise_sd
            lo = start + done
            hi = lo + step
            s1[lo:hi] = config.gain_ch1 * (
                (quads[:, 0] + aux[:, 0]) + 1j * (quads[:, 1] - aux[:, 1])
            )
            s2[lo:hi] = config.gain_ch2 * (
                (quads[:, 2] + aux[:, 2]) + 1j * (quads[:, 3] - aux[:, 3])
            )
            done += step
        start += m
    return RecordBatch(s1, s2)

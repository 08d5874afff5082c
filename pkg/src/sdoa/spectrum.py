"""Spatial spectra on angle grids.

Steering vectors, spectrum evaluation from an output vector, the Gaussian
reference spectrum used as a regression target, the matching loss, peak
extraction with parabolic refinement, and the RMSE metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AngleGrid",
    "Spectrum",
    "DoaEstimate",
    "TRAIN_GRID_SIZE",
    "EVAL_GRID_SIZE",
    "steering_vector",
    "steering_matrix",
    "eval_spectrum",
    "reference_spectrum",
    "spectrum_loss",
    "find_peaks",
    "rmse",
]

# loss evaluation runs on the coarse grid (0.5 deg), peak search on the
# fine one (0.1 deg); both span the full front half-plane
TRAIN_GRID_SIZE = 361
EVAL_GRID_SIZE = 1801

DEFAULT_SIGMA_BAR = 100.0
DEFAULT_MIN_SEPARATION_DEG = 5.0


@dataclass(frozen=True)
class AngleGrid:
    """Uniformly spaced scan angles in degrees inside [-90, 90]."""

    angles: np.ndarray

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=np.float64)
        object.__setattr__(self, "angles", angles)
        if angles.ndim != 1 or angles.size < 2:
            raise ValueError("grid needs at least two angles")
        steps = np.diff(angles)
        if np.any(steps <= 0):
            raise ValueError("grid angles must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
            raise ValueError("grid must be uniformly spaced")
        if angles[0] < -90.0 - 1e-9 or angles[-1] > 90.0 + 1e-9:
            raise ValueError("grid must stay inside [-90, 90] degrees")

    @classmethod
    def linspace(cls, size: int = EVAL_GRID_SIZE, lo: float = -90.0, hi: float = 90.0):
        return cls(np.linspace(lo, hi, size))

    @property
    def step(self) -> float:
        return float(self.angles[1] - self.angles[0])

    def __len__(self) -> int:
        return self.angles.size


@dataclass
class Spectrum:
    """Nonnegative spectrum values sampled on an AngleGrid."""

    grid: AngleGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.grid),):
            raise ValueError("spectrum length does not match its grid")
        if np.any(self.values < -1e-12):
            raise ValueError("spectrum values must be nonnegative")
        np.maximum(self.values, 0.0, out=self.values)

    def normalized(self) -> "Spectrum":
        """Unit-peak copy (no-op for an all-zero spectrum)."""
        peak = self.values.max()
        return Spectrum(self.grid, self.values / peak if peak > 0 else self.values.copy())


@dataclass
class DoaEstimate:
    """Estimated DOAs in degrees, ascending, with their peak values.

    `flagged` marks degenerate extractions where fewer strict local maxima
    existed than requested and the result was padded from raw grid values.
    """

    doas: np.ndarray
    peak_values: np.ndarray
    flagged: bool = False

    def __post_init__(self):
        self.doas = np.asarray(self.doas, dtype=np.float64)
        self.peak_values = np.asarray(self.peak_values, dtype=np.float64)


def steering_vector(theta_deg: float, positions, wavelength: float = 1.0) -> np.ndarray:
    """Array response to a unit plane wave: exp(j 2 pi d/lambda sin(theta))."""
    if abs(theta_deg) > 90.0 + 1e-9:
        raise ValueError(f"angle {theta_deg} outside [-90, 90] degrees")
    d = np.asarray(positions, dtype=np.float64)
    return np.exp(2j * np.pi * (d / wavelength) * np.sin(np.deg2rad(theta_deg)))


def steering_matrix(angles_deg, positions, wavelength: float = 1.0) -> np.ndarray:
    """Rows are conjugated steering vectors, so `M @ z` evaluates a^H(angle) z."""
    angles = np.asarray(angles_deg, dtype=np.float64)
    d = np.asarray(positions, dtype=np.float64)
    phase = 2.0 * np.pi * np.outer(np.sin(np.deg2rad(angles)), d / wavelength)
    return np.exp(-1j * phase)


def eval_spectrum(z, grid: AngleGrid, positions, wavelength: float = 1.0) -> Spectrum:
    """Spectrum induced by an output vector z: |a^H(angle) z|^2 on the grid."""
    z = np.asarray(z, dtype=np.complex128)
    mat = steering_matrix(grid.angles, positions, wavelength)
    if z.shape != (mat.shape[1],):
        raise ValueError(f"z length {z.shape} does not match positions {mat.shape[1]}")
    return Spectrum(grid, np.abs(mat @ z) ** 2)


def _doas_of(truth) -> np.ndarray:
    return np.asarray(getattr(truth, "doas_deg", truth), dtype=np.float64)


def reference_spectrum(
    truth,
    grid: AngleGrid,
    n_antennas: int,
    sigma_bar: float = DEFAULT_SIGMA_BAR,
    amplitude: float = 1.0,
) -> Spectrum:
    """Gaussian-bump target spectrum with one bump of height `amplitude` per DOA.

    The bump width scales inversely with the array size: sigma = sigma_bar / N
    in degrees, giving a 3 dB full width of 2 * sigma * sqrt(ln 2).
    """
    if sigma_bar <= 0:
        raise ValueError("sigma_bar must be positive")
    doas = _doas_of(truth)
    sigma = sigma_bar / n_antennas
    diff = grid.angles[:, None] - doas[None, :]
    values = amplitude * np.exp(-(diff**2) / sigma**2)
    return Spectrum(grid, values.sum(axis=1))


def reference_values(doas_batch: np.ndarray, grid_angles: np.ndarray, sigma: float) -> np.ndarray:
    """Batched reference spectra as a plain array: (batch, n_angles)."""
    diff = grid_angles[None, None, :] - doas_batch[:, :, None]
    return np.exp(-(diff**2) / sigma**2).sum(axis=1)


def spectrum_loss(ref: Spectrum, est: Spectrum) -> float:
    """Mean squared pointwise difference between two spectra on one grid."""
    if not np.array_equal(ref.grid.angles, est.grid.angles):
        raise ValueError("spectra live on different grids")
    diff = ref.values - est.values
    return float(diff @ diff / len(ref.grid))


def _parabolic_offset(y_lo: float, y_mid: float, y_hi: float) -> float:
    """Vertex offset (in grid steps, clamped to +-1/2) of a 3-point parabola."""
    denom = y_lo - 2.0 * y_mid + y_hi
    if denom >= -1e-300:  # flat or non-concave in log domain
        return 0.0
    return float(np.clip(0.5 * (y_lo - y_hi) / denom, -0.5, 0.5))


def find_peaks(spec: Spectrum, k: int, min_separation_deg: float = DEFAULT_MIN_SEPARATION_DEG) -> DoaEstimate:
    """Extract the k largest well-separated local maxima of a spectrum.

    Local maxima must be strictly greater than both neighbours; each is
    refined by parabolic interpolation over log values within its grid
    cell.  Selection is greedy by peak value subject to the separation
    constraint.  If fewer than k maxima survive, the estimate is padded
    from the largest remaining grid values and flagged.
    """
    if k < 1:
        raise ValueError("need k >= 1 peaks")
    values = spec.values
    angles = spec.grid.angles
    n = values.size
    if k > n:
        raise ValueError(f"cannot extract {k} peaks from {n} grid points")
    step = spec.grid.step

    interior = np.arange(1, n - 1)
    is_max = (values[interior] > values[interior - 1]) & (values[interior] > values[interior + 1])
    candidates = interior[is_max]

    logv = np.log(np.maximum(values, 1e-300))
    refined = []
    for i in candidates:
        off = _parabolic_offset(logv[i - 1], logv[i], logv[i + 1])
        refined.append((angles[i] + off * step, values[i]))
    refined.sort(key=lambda t: t[1], reverse=True)

    chosen: list[tuple[float, float]] = []
    for ang, val in refined:
        if all(abs(ang - c[0]) >= min_separation_deg for c in chosen):
            chosen.append((ang, val))
        if len(chosen) == k:
            break

    flagged = len(chosen) < k
    if flagged:
        order = np.argsort(values)[::-1]
        for i in order:
            if len(chosen) == k:
                break
            ang = float(angles[i])
            if all(abs(ang - c[0]) >= min_separation_deg for c in chosen):
                chosen.append((ang, float(values[i])))
        for i in order:  # separation infeasible; fill with distinct grid points
            if len(chosen) == k:
                break
            ang = float(angles[i])
            if all(abs(ang - c[0]) > 1e-12 for c in chosen):
                chosen.append((ang, float(values[i])))

    chosen.sort(key=lambda t: t[0])
    doas = np.array([c[0] for c in chosen])
    peaks = np.array([c[1] for c in chosen])
    return DoaEstimate(doas, peaks, flagged=flagged)


def rmse(estimates, truths) -> float:
    """Root mean square DOA error in degrees over a batch of trials.

    Estimated and true sets are paired by sorting both ascending, which is
    the optimal assignment for scalar L2 matching; the normalisation is by
    (number of trials) * (sources per trial).
    """
    if len(estimates) != len(truths):
        raise ValueError("estimate and truth lists differ in length")
    if not estimates:
        raise ValueError("need at least one trial")
    total = 0.0
    count = 0
    k0 = None
    for est, truth in zip(estimates, truths):
        est_doas = np.sort(np.asarray(getattr(est, "doas", est), dtype=np.float64))
        true_doas = np.sort(_doas_of(truth))
        if k0 is None:
            k0 = true_doas.size
        if est_doas.size != true_doas.size or true_doas.size != k0:
            raise ValueError("all trials must share the same number of sources")
        diff = est_doas - true_doas
        total += float(diff @ diff)
        count += true_doas.size
    return float(np.sqrt(total / count))

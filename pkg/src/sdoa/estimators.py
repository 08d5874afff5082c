"""Classical single-snapshot DOA estimators and their estimator-API facade.

Functional cores: a conventional beamformer, MUSIC on a Hankel lift of the
snapshot, grid-based orthogonal matching pursuit, and atomic-norm
denoising solved as a small SDP by ADMM.  The classes at the bottom wrap
the cores in the familiar fit/predict/transform interface so they compose
with pipelines and model-selection tooling.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from . import linalg
from .spectrum import (
    DEFAULT_MIN_SEPARATION_DEG,
    EVAL_GRID_SIZE,
    AngleGrid,
    DoaEstimate,
    Spectrum,
    eval_spectrum,
    find_peaks,
    steering_matrix,
)
from .validation import check_received_vector, check_snapshot_matrix

__all__ = [
    "MusicConfig",
    "AnmConfig",
    "AnmResult",
    "AnmConvergenceError",
    "beamformer_spectrum",
    "hankel_lift",
    "music_single_snapshot",
    "omp",
    "anm_denoise",
    "anm_denoise_full",
    "anm_spectrum",
    "Beamformer",
    "HankelMusic",
    "GridOmp",
    "AtomicNormDenoiser",
    "ESTIMATOR_NAMES",
    "make_estimator",
]

MUSIC_VALUE_CAP = 1e12  # pseudospectrum cap ahead of unit-peak normalisation


def _ula_positions(n: int, spacing: float = 0.5) -> np.ndarray:
    return np.arange(n) * spacing


def beamformer_spectrum(r, grid: AngleGrid, positions=None, wavelength: float = 1.0) -> Spectrum:
    """Matched-filter spectrum |a^H(angle) r|^2 on the grid."""
    r = check_received_vector(r)
    if positions is None:
        positions = _ula_positions(r.size)
    return eval_spectrum(r, grid, positions, wavelength)


def hankel_lift(r, hankel_rows: int) -> np.ndarray:
    """Rearrange a length-N vector into an L x (N - L + 1) Hankel matrix."""
    r = check_received_vector(r)
    n = r.size
    if not 1 <= hankel_rows <= n:
        raise ValueError(f"hankel_rows must be in [1, {n}], got {hankel_rows}")
    cols = n - hankel_rows + 1
    idx = np.arange(hankel_rows)[:, None] + np.arange(cols)[None, :]
    return r[idx]


@dataclass(frozen=True)
class MusicConfig:
    """Subspace split for single-snapshot MUSIC: K sources, L Hankel rows."""

    n_sources: int = 3
    hankel_rows: int | None = None  # defaults to N // 2

    def rows_for(self, n: int) -> int:
        rows = self.hankel_rows if self.hankel_rows is not None else n // 2
        if not (1 <= self.n_sources < rows):
            raise ValueError(f"need 1 <= K < L, got K={self.n_sources}, L={rows}")
        if rows > n - self.n_sources:
            raise ValueError(f"need L <= N - K, got L={rows}, N={n}, K={self.n_sources}")
        return rows


def music_single_snapshot(
    r,
    cfg: MusicConfig,
    grid: AngleGrid,
    spacing: float = 0.5,
    min_separation_deg: float = DEFAULT_MIN_SEPARATION_DEG,
) -> tuple[Spectrum, DoaEstimate]:
    """MUSIC pseudospectrum from one snapshot via a Hankel lift.

    The left singular vectors beyond the K largest span the noise
    subspace; the pseudospectrum is the reciprocal projection onto it,
    evaluated with length-L steering vectors on the nominal grid, capped
    and normalised to unit peak.
    """
    r = check_received_vector(r)
    rows = cfg.rows_for(r.size)
    u, _, _ = linalg.svd(hankel_lift(r, rows))
    noise_basis = u[:, cfg.n_sources :]

    mat = steering_matrix(grid.angles, _ula_positions(rows, spacing))
    proj = np.sum(np.abs(mat @ noise_basis) ** 2, axis=1)
    with np.errstate(divide="ignore"):
        pseudo = np.where(proj > 0, 1.0 / np.maximum(proj, 1e-300), np.inf)
    pseudo = np.minimum(pseudo, MUSIC_VALUE_CAP)
    spec = Spectrum(grid, pseudo).normalized()
    return spec, find_peaks(spec, cfg.n_sources, min_separation_deg)


def omp(
    r,
    grid: AngleGrid,
    k: int,
    spacing: float = 0.5,
) -> DoaEstimate:
    """Orthogonal matching pursuit over a grid dictionary of steering atoms.

    Atoms are unit-norm steering vectors at the grid angles.  Each of the
    k iterations picks the atom best correlated with the residual, refits
    all selected coefficients by least squares, and updates the residual.
    """
    r = check_received_vector(r)
    n = r.size
    if k < 1:
        raise ValueError("need k >= 1 atoms")
    if k > len(grid):
        raise ValueError(f"cannot select {k} atoms from {len(grid)} grid points")

    mat = steering_matrix(grid.angles, _ula_positions(n, spacing))  # rows a^H
    scale = 1.0 / np.sqrt(n)
    selected: list[int] = []
    residual = r.copy()
    coef = np.zeros(0, dtype=np.complex128)
    for _ in range(k):
        corr = np.abs(mat @ residual) * scale
        corr[selected] = -1.0
        selected.append(int(np.argmax(corr)))
        atoms = mat[selected].conj().T * scale  # N x |selected|
        coef = linalg.lstsq(atoms, r)
        residual = r - atoms @ coef

    order = np.argsort(grid.angles[selected])
    doas = grid.angles[selected][order]
    powers = np.abs(coef[order]) ** 2
    return DoaEstimate(doas, powers)


@dataclass(frozen=True)
class AnmConfig:
    """Settings for the atomic-norm denoising SDP.

    `beta` is the square root of the trace budget on the certificate
    block; None picks 1.2 * ||r||_2 at solve time.
    """

    beta: float | None = None
    rho: float = 1.0
    max_iters: int = 5000
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6

    def __post_init__(self):
        if self.beta is not None and self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.rho <= 0 or self.tol_primal <= 0 or self.tol_dual <= 0:
            raise ValueError("rho and tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class AnmResult:
    """Converged ANM solution: the denoised vector plus its certificate."""

    h: np.ndarray
    cap_matrix: np.ndarray
    iterations: int
    primal_residual: float
    dual_residual: float


class AnmConvergenceError(RuntimeError):
    def __init__(self, message: str, primal_residual: float, dual_residual: float):
        super().__init__(message)
        self.primal_residual = primal_residual
        self.dual_residual = dual_residual


def _anm_affine_project(v: np.ndarray, r: np.ndarray, beta_sq: float, rho: float, prox: bool) -> np.ndarray:
    """Least-squares update of the structured block matrix [[B, h], [h^H, 1]].

    Every diagonal of B is shifted to its target sum (0 off the main
    diagonal, beta^2 on it), the corner is pinned to one, and the h block
    either solves the data-fit prox or is copied through (for feasibility
    polish).
    """
    n = r.size
    x = np.zeros_like(v)
    b = v[:n, :n].copy()
    for off in range(-(n - 1), n):
        i = np.arange(max(0, -off), min(n, n - off))
        j = i + off
        target = beta_sq if off == 0 else 0.0
        diag = b[i, j]
        b[i, j] = diag - (diag.sum() - target) / i.size
    x[:n, :n] = b
    h = 0.5 * (v[:n, n] + np.conj(v[n, :n]))
    if prox:
        h = (r + rho * h) / (1.0 + rho)
    x[:n, n] = h
    x[n, :n] = np.conj(h)
    x[n, n] = 1.0
    return x


def anm_denoise_full(r, cfg: AnmConfig = AnmConfig()) -> AnmResult:
    """Denoise a snapshot onto the atomic set by ADMM on the SDP form.

    Splits the block matrix [[B, h], [h^H, 1]] between the affine
    constraint set (diagonal-sum and trace targets, data-fit prox on h)
    and the PSD cone, with scaled dual ascent and residual-balanced rho.
    After the stopping test a short alternating-projection polish drives
    the iterate to joint feasibility well below the reported tolerances.
    """
    r = check_received_vector(r)
    n = r.size
    beta = cfg.beta if cfg.beta is not None else 1.2 * float(np.linalg.norm(r))
    if beta <= 0:
        beta = 1.0  # all-zero input: any positive budget is feasible
    beta_sq = beta * beta
    rho = cfg.rho

    z = np.zeros((n + 1, n + 1), dtype=np.complex128)
    z[:n, :n] = np.eye(n) * (beta_sq / n)
    z[n, n] = 1.0
    u = np.zeros_like(z)

    converged = False
    primal = dual = np.inf
    iterations = 0
    for it in range(cfg.max_iters):
        iterations = it + 1
        x = _anm_affine_project(z - u, r, beta_sq, rho, prox=True)
        z_prev = z
        z = linalg.psd_project(x + u)
        u = u + x - z

        primal = float(np.linalg.norm(x - z))
        dual = float(rho * np.linalg.norm(z - z_prev))
        eps_pri = cfg.tol_primal * max(1.0, float(np.linalg.norm(x)), float(np.linalg.norm(z)))
        eps_dua = cfg.tol_dual * max(1.0, float(rho * np.linalg.norm(u)))
        if primal <= eps_pri and dual <= eps_dua:
            converged = True
            break
        if (it + 1) % 50 == 0:  # residual balancing keeps the pair comparable
            if primal > 10.0 * dual:
                rho *= 2.0
                u /= 2.0
            elif dual > 10.0 * primal:
                rho /= 2.0
                u *= 2.0

    if not converged:
        raise AnmConvergenceError(
            f"ANM ADMM did not converge in {cfg.max_iters} iterations "
            f"(primal {primal:.3e}, dual {dual:.3e})",
            primal,
            dual,
        )

    # polish: alternate PSD / affine projections to joint feasibility
    xf = x
    for _ in range(20000):
        zf = linalg.psd_project(xf)
        xf = _anm_affine_project(zf, r, beta_sq, rho, prox=False)
        if np.linalg.norm(xf - zf) < 1e-10:
            break

    return AnmResult(xf[:n, n].copy(), xf[:n, :n].copy(), iterations, primal, dual)


def anm_denoise(r, cfg: AnmConfig = AnmConfig()) -> np.ndarray:
    """Denoised vector whose induced polynomial peaks at the source DOAs."""
    return anm_denoise_full(r, cfg).h


def anm_spectrum(h, grid: AngleGrid, spacing: float = 0.5) -> Spectrum:
    """Polynomial |a^H(angle) h|^2 of a denoised vector."""
    h = np.asarray(h, dtype=np.complex128)
    return eval_spectrum(h, grid, _ula_positions(h.size, spacing))


# --------------------------------------------------------------------------
# estimator API


class BaseDoaEstimator(BaseEstimator):
    """Single-snapshot DOA estimators with a fit/predict/transform surface.

    `predict` maps snapshots (n, N) to DOAs (n, n_sources) in degrees,
    sorted per row; `transform` returns the linear spatial spectra
    (n, grid_size).  The classical estimators are stateless, so `fit`
    only validates parameters.
    """

    def fit(self, X=None, y=None):
        if X is not None:
            check_snapshot_matrix(X, self.n_antennas)
        self._check_params()
        return self

    def _check_params(self):
        self.grid_for()  # constructing the grid validates grid_size

    def grid_for(self) -> AngleGrid:
        return AngleGrid.linspace(self.grid_size)

    def estimate_one(self, r) -> tuple[Spectrum, DoaEstimate]:
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:
        X = check_snapshot_matrix(X, self.n_antennas)
        return np.vstack([self.estimate_one(row)[1].doas for row in X])

    def transform(self, X) -> np.ndarray:
        X = check_snapshot_matrix(X, self.n_antennas)
        return np.vstack([self.estimate_one(row)[0].values for row in X])


class Beamformer(BaseDoaEstimator):
    """Conventional (matched-filter / zero-padded DFT) beamformer."""

    def __init__(
        self,
        n_antennas: int = 16,
        n_sources: int = 3,
        spacing: float = 0.5,
        grid_size: int = EVAL_GRID_SIZE,
        min_separation_deg: float = DEFAULT_MIN_SEPARATION_DEG,
    ):
        self.n_antennas = n_antennas
        self.n_sources = n_sources
        self.spacing = spacing
        self.grid_size = grid_size
        self.min_separation_deg = min_separation_deg

    def estimate_one(self, r):
        grid = self.grid_for()
        spec = beamformer_spectrum(r, grid, _ula_positions(self.n_antennas, self.spacing))
        return spec, find_peaks(spec, self.n_sources, self.min_separation_deg)


class HankelMusic(BaseDoaEstimator):
    """Single-snapshot MUSIC via Hankel lift and SVD subspace split."""

    def __init__(
        self,
        n_antennas: int = 16,
        n_sources: int = 3,
        hankel_rows: int | None = None,
        spacing: float = 0.5,
        grid_size: int = EVAL_GRID_SIZE,
        min_separation_deg: float = DEFAULT_MIN_SEPARATION_DEG,
    ):
        self.n_antennas = n_antennas
        self.n_sources = n_sources
        self.hankel_rows = hankel_rows
        self.spacing = spacing
        self.grid_size = grid_size
        self.min_separation_deg = min_separation_deg

    def _check_params(self):
        super()._check_params()
        MusicConfig(self.n_sources, self.hankel_rows).rows_for(self.n_antennas)

    def estimate_one(self, r):
        cfg = MusicConfig(self.n_sources, self.hankel_rows)
        return music_single_snapshot(
            r, cfg, self.grid_for(), self.spacing, self.min_separation_deg
        )


class GridOmp(BaseDoaEstimator):
    """Greedy sparse recovery over the grid dictionary; spectra are sticks."""

    def __init__(
        self,
        n_antennas: int = 16,
        n_sources: int = 3,
        spacing: float = 0.5,
        grid_size: int = EVAL_GRID_SIZE,
        min_separation_deg: float = DEFAULT_MIN_SEPARATION_DEG,
    ):
        self.n_antennas = n_antennas
        self.n_sources = n_sources
        self.spacing = spacing
        self.grid_size = grid_size
        self.min_separation_deg = min_separation_deg

    def estimate_one(self, r):
        grid = self.grid_for()
        est = omp(r, grid, self.n_sources, self.spacing)
        values = np.zeros(len(grid))
        idx = np.searchsorted(grid.angles, est.doas)
        values[np.clip(idx, 0, len(grid) - 1)] = est.peak_values
        return Spectrum(grid, values), est


class AtomicNormDenoiser(BaseDoaEstimator):
    """Atomic-norm denoising SDP solved by ADMM, peaks of the polynomial."""

    def __init__(
        self,
        n_antennas: int = 16,
        n_sources: int = 3,
        spacing: float = 0.5,
        grid_size: int = EVAL_GRID_SIZE,
        min_separation_deg: float = DEFAULT_MIN_SEPARATION_DEG,
        beta: float | None = None,
        rho: float = 1.0,
        max_iters: int = 5000,
        tol: float = 1e-6,
    ):
        self.n_antennas = n_antennas
        self.n_sources = n_sources
        self.spacing = spacing
        self.grid_size = grid_size
        self.min_separation_deg = min_separation_deg
        self.beta = beta
        self.rho = rho
        self.max_iters = max_iters
        self.tol = tol

    def _anm_config(self) -> AnmConfig:
        return AnmConfig(
            beta=self.beta, rho=self.rho, max_iters=self.max_iters,
            tol_primal=self.tol, tol_dual=self.tol,
        )

    def estimate_one(self, r):
        h = anm_denoise(r, self._anm_config())
        spec = anm_spectrum(h, self.grid_for(), self.spacing)
        return spec, find_peaks(spec, self.n_sources, self.min_separation_deg)


ESTIMATOR_NAMES = ("fft", "music", "omp", "anm", "sdoanet")


def make_estimator(name: str, **kwargs):
    """Build an estimator from its CLI name ("sdoanet" needs model_path)."""
    from .network import SdoaNet  # local import keeps the module graph acyclic

    registry = {
        "fft": Beamformer,
        "music": HankelMusic,
        "omp": GridOmp,
        "anm": AtomicNormDenoiser,
        "sdoanet": SdoaNet,
    }
    if name not in registry:
        raise ValueError(f"unknown estimator {name!r}; valid names: {', '.join(ESTIMATOR_NAMES)}")
    model_path = kwargs.pop("model_path", None)
    est = registry[name](**kwargs)
    if name == "sdoanet" and model_path is not None:
        est.load(model_path)
    return est


def timed_predict(estimator, r) -> tuple[np.ndarray, float]:
    """One-snapshot prediction plus its wall-clock runtime in milliseconds."""
    t0 = time.perf_counter()
    doas = estimator.predict(np.asarray(r)[None, :])[0]
    return doas, (time.perf_counter() - t0) * 1e3

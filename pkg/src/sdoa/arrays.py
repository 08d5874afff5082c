"""Imperfect linear-array signal model.

A nominal half-wavelength ULA plus five hardware imperfection mechanisms:
element position perturbations, inconsistent channel gains, inconsistent
channel phases, mutual coupling, and a tanh receiver nonlinearity.  The
mechanisms are sampled stage by stage following a seven-stage training
curriculum, with a global "imperfect factor" scaling all severities at
once.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from .spectrum import steering_vector
from .validation import as_generator, check_finite

__all__ = [
    "ArrayConfig",
    "ImperfectionCaps",
    "ImperfectionRealization",
    "CurriculumStage",
    "SourceSet",
    "Snapshot",
    "curriculum_stage_for",
    "sample_imperfections",
    "apply_nonlinearity",
    "snr_to_noise_std",
    "synthesize_snapshot",
]

MIN_GAIN = 0.05  # resampling floor keeping channel gains strictly positive


class CurriculumStage(IntEnum):
    """Training stages, cycled in this order."""

    PERFECT = 0
    POSITION_PERTURBATION = 1
    INCONSISTENT_GAINS = 2
    INCONSISTENT_PHASES = 3
    MUTUAL_COUPLING = 4
    NONLINEAR = 5
    ALL_EFFECTS = 6

    @property
    def label(self) -> str:
        return self.name.lower()


def curriculum_stage_for(step_index: int) -> CurriculumStage:
    """Stage used at a given training step; the 7-stage cycle repeats."""
    if step_index < 0:
        raise ValueError("step index must be nonnegative")
    return CurriculumStage(step_index % len(CurriculumStage))


@dataclass(frozen=True)
class ArrayConfig:
    """Nominal geometry of the receiving ULA (lengths in wavelengths)."""

    n_antennas: int = 16
    wavelength: float = 1.0
    nominal_spacing: float = 0.5

    def __post_init__(self):
        if self.n_antennas < 2:
            raise ValueError("need at least two antennas")
        if self.wavelength <= 0 or self.nominal_spacing <= 0:
            raise ValueError("wavelength and spacing must be positive")

    @property
    def nominal_positions(self) -> np.ndarray:
        return np.arange(self.n_antennas) * self.nominal_spacing * self.wavelength


@dataclass(frozen=True)
class ImperfectionCaps:
    """Severity caps for the imperfection mechanisms.

    `imperfect_factor` scales every cap simultaneously; zero disables all
    effects regardless of stage.
    """

    max_pos_std: float = 0.15  # wavelengths
    max_gain_std: float = 0.5
    max_phase_std: float = 0.2  # radians
    coupling_base: float = 0.06
    nonlinear_strength: float = 1.0
    imperfect_factor: float = 1.0

    def __post_init__(self):
        for name in (
            "max_pos_std",
            "max_gain_std",
            "max_phase_std",
            "coupling_base",
            "nonlinear_strength",
            "imperfect_factor",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.coupling_base >= 1.0:
            raise ValueError("coupling_base must be < 1")

    def with_factor(self, xi: float) -> "ImperfectionCaps":
        return replace(self, imperfect_factor=xi)


@dataclass
class ImperfectionRealization:
    """One concrete draw of all imperfection mechanisms.

    Antenna 0 stays the phase/position reference (offset and phase zero);
    the coupling matrix has a unit diagonal; `nonlinear_sigma == 0` means
    the receive chain is linear.
    """

    pos_offsets: np.ndarray
    gains: np.ndarray
    phases: np.ndarray
    coupling: np.ndarray
    nonlinear_sigma: float
    stage: CurriculumStage = CurriculumStage.PERFECT

    def __post_init__(self):
        self.pos_offsets = np.asarray(self.pos_offsets, dtype=np.float64)
        self.gains = np.asarray(self.gains, dtype=np.float64)
        self.phases = np.asarray(self.phases, dtype=np.float64)
        self.coupling = np.asarray(self.coupling, dtype=np.complex128)
        n = self.pos_offsets.size
        if self.gains.shape != (n,) or self.phases.shape != (n,) or self.coupling.shape != (n, n):
            raise ValueError("imperfection fields disagree on array size")
        if self.pos_offsets[0] != 0.0 or self.phases[0] != 0.0:
            raise ValueError("antenna 0 is the reference: offset and phase must be zero")
        if np.any(self.gains <= 0):
            raise ValueError("channel gains must be positive")
        if not np.allclose(np.diag(self.coupling), 1.0, rtol=0, atol=1e-12):
            raise ValueError("coupling matrix must have a unit diagonal")
        off = self.coupling[~np.eye(n, dtype=bool)]
        if np.any(np.abs(off) >= 1.0):
            raise ValueError("off-diagonal coupling magnitudes must be < 1")
        if self.nonlinear_sigma < 0:
            raise ValueError("nonlinearity strength must be nonnegative")

    @property
    def n_antennas(self) -> int:
        return self.pos_offsets.size

    @classmethod
    def identity(cls, n: int, stage: CurriculumStage = CurriculumStage.PERFECT):
        return cls(
            pos_offsets=np.zeros(n),
            gains=np.ones(n),
            phases=np.zeros(n),
            coupling=np.eye(n, dtype=np.complex128),
            nonlinear_sigma=0.0,
            stage=stage,
        )


_EFFECTS_BY_STAGE = {
    CurriculumStage.PERFECT: frozenset(),
    CurriculumStage.POSITION_PERTURBATION: frozenset({"position"}),
    CurriculumStage.INCONSISTENT_GAINS: frozenset({"gain"}),
    CurriculumStage.INCONSISTENT_PHASES: frozenset({"phase"}),
    CurriculumStage.MUTUAL_COUPLING: frozenset({"coupling"}),
    CurriculumStage.NONLINEAR: frozenset({"nonlinear"}),
    CurriculumStage.ALL_EFFECTS: frozenset({"position", "gain", "phase", "coupling", "nonlinear"}),
}


def sample_imperfections(
    caps: ImperfectionCaps,
    stage: CurriculumStage,
    rng_seed,
    *,
    n_antennas: int,
) -> ImperfectionRealization:
    """Draw one imperfection realization for a curriculum stage.

    Per active effect the severity itself is uniform in [0, xi * cap], so a
    stage covers the whole range of severities up to its cap:

    - position offsets ~ Normal(0, sigma_per), antenna 0 pinned to zero;
    - gains ~ 1 + Normal(0, sigma_gain), redrawn while <= 0.05;
    - phases ~ Normal(0, sigma_phase), antenna 0 pinned to zero;
    - coupling magnitude |B[n, n']| ~ Uniform[0, (xi * base)^|n - n'|] with
      phase Uniform[0, 2 pi), unit diagonal;
    - nonlinear sigma = xi * strength (deterministic).

    Inactive effects stay at their identity values.
    """
    stage = CurriculumStage(stage)
    active = _EFFECTS_BY_STAGE[stage]
    rng = as_generator(rng_seed)
    xi = caps.imperfect_factor
    n = int(n_antennas)
    if n < 2:
        raise ValueError("need at least two antennas")

    pos = np.zeros(n)
    if "position" in active:
        sigma = rng.uniform(0.0, xi * caps.max_pos_std)
        pos = rng.normal(0.0, sigma, n) if sigma > 0 else np.zeros(n)
        pos[0] = 0.0

    gains = np.ones(n)
    if "gain" in active:
        sigma = rng.uniform(0.0, xi * caps.max_gain_std)
        if sigma > 0:
            gains = 1.0 + rng.normal(0.0, sigma, n)
            bad = gains <= MIN_GAIN
            while np.any(bad):
                gains[bad] = 1.0 + rng.normal(0.0, sigma, int(bad.sum()))
                bad = gains <= MIN_GAIN

    phases = np.zeros(n)
    if "phase" in active:
        sigma = rng.uniform(0.0, xi * caps.max_phase_std)
        phases = rng.normal(0.0, sigma, n) if sigma > 0 else np.zeros(n)
        phases[0] = 0.0

    coupling = np.eye(n, dtype=np.complex128)
    if "coupling" in active:
        base = xi * caps.coupling_base
        if base >= 1.0:
            raise ValueError("imperfect_factor * coupling_base must stay < 1")
        offsets = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
        bounds = base ** offsets.astype(np.float64)
        mags = rng.uniform(0.0, 1.0, (n, n)) * bounds
        psis = rng.uniform(0.0, 2.0 * np.pi, (n, n))
        coupling = mags * np.exp(1j * psis)
        np.fill_diagonal(coupling, 1.0)

    sigma_nl = xi * caps.nonlinear_strength if "nonlinear" in active else 0.0

    return ImperfectionRealization(pos, gains, phases, coupling, sigma_nl, stage)


def apply_nonlinearity(x, sigma: float) -> np.ndarray:
    """tanh compression applied independently to I and Q components.

    `sigma == 0` means the channel is linear (stage-inactive convention),
    not the tanh(0) limit.
    """
    x = np.asarray(x, dtype=np.complex128)
    if sigma < 0:
        raise ValueError("nonlinearity strength must be nonnegative")
    if sigma == 0.0:
        return x.copy()
    return np.tanh(sigma * x.real) + 1j * np.tanh(sigma * x.imag)


@dataclass(frozen=True)
class SourceSet:
    """Far-field sources: DOAs in degrees and complex amplitudes."""

    doas_deg: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        doas = np.asarray(self.doas_deg, dtype=np.float64)
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        object.__setattr__(self, "doas_deg", doas)
        object.__setattr__(self, "amplitudes", amps)
        if doas.ndim != 1 or doas.size < 1:
            raise ValueError("need at least one source")
        if amps.shape != doas.shape:
            raise ValueError("amplitudes must match DOAs in length")
        if np.any(np.abs(doas) > 90.0):
            raise ValueError("DOAs must lie in [-90, 90] degrees")

    @property
    def k(self) -> int:
        return self.doas_deg.size


@dataclass
class Snapshot:
    """One received vector with its ground truth and synthesis conditions."""

    received: np.ndarray
    truth: SourceSet
    snr_db: float
    stage: CurriculumStage = CurriculumStage.PERFECT

    def __post_init__(self):
        self.received = np.asarray(self.received, dtype=np.complex128)
        check_finite(self.received.view(np.float64), "received vector")

    @property
    def n_antennas(self) -> int:
        return self.received.size


def snr_to_noise_std(snr_db: float, sources: SourceSet) -> float:
    """Per-antenna complex noise standard deviation for a target SNR.

    SNR is defined against the mean per-source power, so unit-modulus
    sources at 0 dB give unit noise variance.  `snr_db = inf` is the
    noiseless limit.
    """
    if sources.k < 1:
        raise ValueError("need at least one source")
    if np.isnan(snr_db) or snr_db == -np.inf:
        raise ValueError("snr_db must be a real value or +inf")
    p_signal = float(np.mean(np.abs(sources.amplitudes) ** 2))
    return float(np.sqrt(p_signal / 10.0 ** (snr_db / 10.0)))


def synthesize_snapshot(
    array: ArrayConfig,
    realization: ImperfectionRealization,
    sources: SourceSet,
    snr_db: float,
    rng_seed,
) -> Snapshot:
    """Simulate one received vector through the imperfect receive chain.

    Per-element plane-wave responses at the perturbed positions are scaled
    by the channel gain/phase, mixed by the coupling matrix, compressed by
    the tanh nonlinearity, and topped with circular complex Gaussian noise
    at the requested SNR.
    """
    n = array.n_antennas
    if realization.n_antennas != n:
        raise ValueError("realization does not match the array size")
    rng = as_generator(rng_seed)

    positions = array.nominal_positions + realization.pos_offsets
    element = realization.gains * np.exp(1j * realization.phases)
    x = np.zeros(n, dtype=np.complex128)
    for theta, amp in zip(sources.doas_deg, sources.amplitudes):
        x += amp * steering_vector(theta, positions, array.wavelength)
    x *= element

    coupled = realization.coupling @ x
    clean = apply_nonlinearity(coupled, realization.nonlinear_sigma)

    sigma_w = snr_to_noise_std(snr_db, sources)
    noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * (sigma_w / np.sqrt(2.0))
    return Snapshot(clean + noise, sources, float(snr_db), realization.stage)

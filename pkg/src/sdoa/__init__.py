"""Single-snapshot DOA estimation workbench for imperfect linear arrays.

Simulates snapshots from a half-wavelength ULA with five hardware
imperfection mechanisms, implements classical super-resolution estimators
(beamformer, Hankel MUSIC, grid OMP, atomic-norm denoising) and a small
trainable spectrum-vector network, and benchmarks them against each other.
"""

from .arrays import (
    ArrayConfig,
    CurriculumStage,
    ImperfectionCaps,
    ImperfectionRealization,
    Snapshot,
    SourceSet,
    apply_nonlinearity,
    curriculum_stage_for,
    sample_imperfections,
    snr_to_noise_std,
    synthesize_snapshot,
)
from .datasets import (
    DoaSamplingPolicy,
    generate_dataset,
    load_dataset,
    sample_sources,
    save_dataset,
)
from .estimators import (
    AnmConfig,
    AnmConvergenceError,
    AtomicNormDenoiser,
    Beamformer,
    GridOmp,
    HankelMusic,
    MusicConfig,
    anm_denoise,
    anm_spectrum,
    beamformer_spectrum,
    hankel_lift,
    make_estimator,
    music_single_snapshot,
    omp,
)
from .linalg import EigResult, hermitian_eig, lstsq, psd_project, svd
from .network import (
    AdamState,
    NetConfig,
    NetworkParams,
    SdoaNet,
    TrainingDivergedError,
    adam_step,
    estimate,
    forward,
    init_params,
    load_model,
    loss_and_grad,
    save_model,
    stack_received,
    to_complex,
    train,
)
from .spectrum import (
    AngleGrid,
    DoaEstimate,
    Spectrum,
    eval_spectrum,
    find_peaks,
    reference_spectrum,
    rmse,
    spectrum_loss,
    steering_vector,
)

__version__ = "0.1.0"

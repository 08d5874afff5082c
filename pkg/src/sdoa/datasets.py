"""Dataset synthesis and the on-disk container format.

Samples are fully determined by a master seed: sample i derives three
independent substreams (imperfections, sources/SNR, noise) so that
sweeping the imperfect factor leaves the drawn scene and noise untouched
(paired trials).  Files carry a fixed header followed by float64
little-endian records, with a JSON sidecar recording how they were made.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .arrays import (
    ArrayConfig,
    CurriculumStage,
    ImperfectionCaps,
    Snapshot,
    SourceSet,
    sample_imperfections,
    synthesize_snapshot,
)
from .validation import as_generator

__all__ = [
    "DoaSamplingPolicy",
    "sample_sources",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
    "sidecar_path",
]

MAGIC = b"SDOA"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIQ")  # magic, version, N, K, count


@dataclass(frozen=True)
class DoaSamplingPolicy:
    """Uniform DOA draws with a minimum pairwise separation."""

    n_sources: int = 3
    min_deg: float = -60.0
    max_deg: float = 60.0
    min_separation_deg: float = 10.0

    def __post_init__(self):
        if self.n_sources < 1:
            raise ValueError("need at least one source")
        if self.max_deg <= self.min_deg:
            raise ValueError("empty DOA range")
        span = self.max_deg - self.min_deg
        if (self.n_sources - 1) * self.min_separation_deg >= span:
            raise ValueError(
                f"{self.n_sources} sources with separation "
                f"{self.min_separation_deg} deg cannot fit in {span} deg"
            )


def sample_sources(policy: DoaSamplingPolicy, rng_seed) -> SourceSet:
    """Draw DOAs by rejection and unit-modulus random-phase amplitudes."""
    rng = as_generator(rng_seed)
    k = policy.n_sources
    for _ in range(100_000):
        doas = np.sort(rng.uniform(policy.min_deg, policy.max_deg, k))
        if k == 1 or np.min(np.diff(doas)) >= policy.min_separation_deg:
            amps = np.exp(2j * np.pi * rng.random(k))
            return SourceSet(doas, amps)
    raise RuntimeError("DOA rejection sampling failed; separation too tight")


def _as_schedule(stage_schedule) -> list[CurriculumStage]:
    if isinstance(stage_schedule, (CurriculumStage, int)):
        stage_schedule = [stage_schedule]
    schedule = [CurriculumStage(s) for s in stage_schedule]
    if not schedule:
        raise ValueError("stage schedule must not be empty")
    return schedule


def generate_dataset(
    array: ArrayConfig,
    caps: ImperfectionCaps,
    stage_schedule,
    n_samples: int,
    snr_range_db: tuple[float, float],
    policy: DoaSamplingPolicy,
    rng_seed: int,
) -> list[Snapshot]:
    """Synthesize snapshots; stages are assigned round-robin from the schedule."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    lo, hi = float(snr_range_db[0]), float(snr_range_db[1])
    if hi < lo:
        raise ValueError("empty SNR range")
    schedule = _as_schedule(stage_schedule)

    snapshots = []
    for i in range(n_samples):
        stage = schedule[i % len(schedule)]
        realization = sample_imperfections(
            caps, stage, (rng_seed, i, 0), n_antennas=array.n_antennas
        )
        scene_rng = as_generator((rng_seed, i, 1))
        sources = sample_sources(policy, scene_rng)
        snr_db = lo if hi == lo else float(scene_rng.uniform(lo, hi))
        snapshots.append(
            synthesize_snapshot(array, realization, sources, snr_db, (rng_seed, i, 2))
        )
    return snapshots


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def _interleave(z: np.ndarray) -> np.ndarray:
    out = np.empty(2 * z.size, dtype="<f8")
    out[0::2] = z.real
    out[1::2] = z.imag
    return out


def _deinterleave(flat: np.ndarray) -> np.ndarray:
    return flat[0::2] + 1j * flat[1::2]


def save_dataset(path, snapshots: list[Snapshot], metadata: dict | None = None) -> Path:
    """Write snapshots as a binary container plus a JSON metadata sidecar.

    Record layout (float64 little-endian, per snapshot): interleaved re/im
    of the received vector, the true DOAs, interleaved re/im amplitudes,
    the SNR in dB and the curriculum stage index.
    """
    if not snapshots:
        raise ValueError("nothing to save")
    path = Path(path)
    n = snapshots[0].n_antennas
    k = snapshots[0].truth.k
    for snap in snapshots:
        if snap.n_antennas != n or snap.truth.k != k:
            raise ValueError("all snapshots must share N and K")

    chunks = [_HEADER.pack(MAGIC, FORMAT_VERSION, n, k, len(snapshots))]
    for snap in snapshots:
        rec = np.concatenate(
            [
                _interleave(snap.received),
                np.asarray(snap.truth.doas_deg, dtype="<f8"),
                _interleave(snap.truth.amplitudes),
                np.array([snap.snr_db, float(int(snap.stage))], dtype="<f8"),
            ]
        )
        chunks.append(rec.astype("<f8").tobytes())
    path.write_bytes(b"".join(chunks))

    meta = dict(metadata or {})
    meta.update({"format_version": FORMAT_VERSION, "n_antennas": n, "n_sources": k, "count": len(snapshots)})
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_dataset(path) -> tuple[list[Snapshot], dict]:
    """Read a dataset container; returns (snapshots, sidecar metadata)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path} is not a dataset file (truncated header)")
    magic, version, n, k, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path} is not a dataset file (bad magic {magic!r})")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported dataset format version {version}")
    rec_len = 2 * n + k + 2 * k + 2
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != count * rec_len:
        raise ValueError(f"{path} is corrupt: expected {count * rec_len} floats, found {body.size}")

    snapshots = []
    for idx in range(count):
        rec = body[idx * rec_len : (idx + 1) * rec_len]
        received = _deinterleave(rec[: 2 * n])
        doas = rec[2 * n : 2 * n + k].copy()
        amps = _deinterleave(rec[2 * n + k : 2 * n + 3 * k])
        snr_db = float(rec[-2])
        stage = CurriculumStage(int(rec[-1]))
        snapshots.append(Snapshot(received, SourceSet(doas, amps), snr_db, stage))

    meta_file = sidecar_path(path)
    metadata = json.loads(meta_file.read_text()) if meta_file.exists() else {}
    return snapshots, metadata


def caps_metadata(caps: ImperfectionCaps) -> dict:
    return asdict(caps)

"""Command-line front end: dataset generation, training, and benchmarks.

Subcommands: simulate | train | spectrum | eval-snr | eval-imperfect.
Experiments are described by a TOML config; every command is
deterministic under a fixed master seed.  Exit codes: 0 success, 1 usage
or configuration error, 2 runtime/convergence failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .arrays import ArrayConfig, CurriculumStage, ImperfectionCaps, sample_imperfections, synthesize_snapshot
from .datasets import DoaSamplingPolicy, caps_metadata, generate_dataset, sample_sources, save_dataset
from .estimators import ESTIMATOR_NAMES, make_estimator
from .network import NetConfig, SdoaNet, TrainingDivergedError, save_model, train
from .spectrum import EVAL_GRID_SIZE, AngleGrid, rmse
from .validation import as_generator

__all__ = ["main", "load_config", "ExperimentConfig"]


class ConfigError(ValueError):
    pass


@dataclass
class TrainSettings:
    epochs: int = 14
    samples_per_epoch: int = 5000
    snr_min_db: float = 0.0
    snr_max_db: float = 30.0
    sigma_bar: float = 100.0
    train_grid_size: int = 361
    seed: int = 0


@dataclass
class SimulateSettings:
    n_samples: int = 128
    snr_min_db: float = 0.0
    snr_max_db: float = 30.0
    stages: list = field(default_factory=lambda: ["all_effects"])
    seed: int = 0


@dataclass
class EvalSettings:
    estimators: list = field(default_factory=lambda: ["fft", "music", "omp", "anm"])
    n_trials: int = 100
    snr_db: float = 20.0
    snr_sweep: list = field(default_factory=lambda: [0.0, 10.0, 20.0, 30.0])
    xi_sweep: list = field(default_factory=lambda: [0.0, 0.5, 1.0])
    grid_size: int = EVAL_GRID_SIZE
    min_separation_deg: float = 5.0
    seed: int = 0


@dataclass
class SpectrumSettings:
    doas: list = field(default_factory=lambda: [-30.0, 10.0, 20.0])
    snr_db: float = 20.0
    xi: float = 0.0
    estimators: list = field(default_factory=lambda: ["fft", "music", "omp", "anm"])
    grid_size: int = EVAL_GRID_SIZE
    seed: int = 0


@dataclass
class ExperimentConfig:
    array: ArrayConfig = field(default_factory=ArrayConfig)
    caps: ImperfectionCaps = field(default_factory=ImperfectionCaps)
    policy: DoaSamplingPolicy = field(default_factory=DoaSamplingPolicy)
    net: NetConfig = field(default_factory=NetConfig)
    train: TrainSettings = field(default_factory=TrainSettings)
    simulate: SimulateSettings = field(default_factory=SimulateSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)
    spectrum: SpectrumSettings = field(default_factory=SpectrumSettings)


_SECTION_TYPES = {
    "array": ArrayConfig,
    "caps": ImperfectionCaps,
    "sources": DoaSamplingPolicy,
    "net": NetConfig,
    "train": TrainSettings,
    "simulate": SimulateSettings,
    "eval": EvalSettings,
    "spectrum": SpectrumSettings,
}
_SECTION_ATTR = {
    "array": "array",
    "caps": "caps",
    "sources": "policy",
    "net": "net",
    "train": "train",
    "simulate": "simulate",
    "eval": "eval",
    "spectrum": "spectrum",
}


def _build_section(cls, data: dict, section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [{section}] section: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    cfg = ExperimentConfig()
    for section, payload in data.items():
        if section not in _SECTION_TYPES:
            raise ConfigError(
                f"unknown section [{section}]; valid sections: {', '.join(sorted(_SECTION_TYPES))}"
            )
        if not isinstance(payload, dict):
            raise ConfigError(f"[{section}] must be a table of key/value pairs")
        setattr(cfg, _SECTION_ATTR[section], _build_section(_SECTION_TYPES[section], payload, section))
    _check_estimator_names(cfg.eval.estimators)
    _check_estimator_names(cfg.spectrum.estimators)
    return cfg


def _check_estimator_names(names) -> None:
    for name in names:
        if name not in ESTIMATOR_NAMES:
            raise ConfigError(
                f"unknown estimator {name!r}; valid names: {', '.join(ESTIMATOR_NAMES)}"
            )


def _parse_stages(names) -> list[CurriculumStage]:
    stages = []
    for name in names:
        try:
            stages.append(CurriculumStage[str(name).upper()])
        except KeyError:
            valid = ", ".join(s.label for s in CurriculumStage)
            raise ConfigError(f"unknown stage {name!r}; valid stages: {valid}") from None
    return stages


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: ExperimentConfig, out_dir: Path, seed: int | None) -> int:
    sim = cfg.simulate
    master = sim.seed if seed is None else seed
    stages = _parse_stages(sim.stages)
    snapshots = generate_dataset(
        cfg.array,
        cfg.caps,
        stages,
        sim.n_samples,
        (sim.snr_min_db, sim.snr_max_db),
        cfg.policy,
        master,
    )
    meta = {
        "seed": master,
        "stage_schedule": [s.label for s in stages],
        "snr_range_db": [sim.snr_min_db, sim.snr_max_db],
        "caps": caps_metadata(cfg.caps),
        "policy": dataclasses.asdict(cfg.policy),
        "array": dataclasses.asdict(cfg.array),
    }
    path = save_dataset(out_dir / "dataset.sdoa", snapshots, meta)
    print(f"wrote {len(snapshots)} snapshots to {path} (seed {master})")
    return 0


def cmd_train(cfg: ExperimentConfig, out_dir: Path, seed: int | None) -> int:
    settings = cfg.train
    master = settings.seed if seed is None else seed
    history = []
    code = 0
    try:
        params, history = train(
            cfg.net,
            cfg.caps,
            epochs=settings.epochs,
            samples_per_epoch=settings.samples_per_epoch,
            policy=cfg.policy,
            snr_range_db=(settings.snr_min_db, settings.snr_max_db),
            rng_seed=master,
            spacing=cfg.array.nominal_spacing,
            sigma_bar=settings.sigma_bar,
            train_grid_size=settings.train_grid_size,
        )
        model_path = save_model(out_dir / "model.sdon", params, cfg.net)
        print(f"wrote model to {model_path} (seed {master})")
    except TrainingDivergedError as exc:
        history = exc.history
        print(f"training diverged: {exc}", file=sys.stderr)
        code = 2
    _write_csv(
        out_dir / "history.csv",
        ["epoch", "stage", "loss"],
        [[h.epoch, h.stage_label, float(h.mean_loss)] for h in history],
    )
    return code


def _build_estimators(names, cfg: ExperimentConfig, model_path, grid_size, min_sep):
    ests = {}
    for name in names:
        kwargs = dict(
            n_antennas=cfg.array.n_antennas,
            n_sources=cfg.policy.n_sources,
            spacing=cfg.array.nominal_spacing,
            grid_size=grid_size,
            min_separation_deg=min_sep,
        )
        if name == "sdoanet":
            if model_path is None:
                raise ConfigError("estimator 'sdoanet' needs --model pointing at a trained model")
            if not Path(model_path).exists():
                raise ConfigError(f"model file not found: {model_path}")
            kwargs["model_path"] = model_path
        ests[name] = make_estimator(name, **kwargs)
    return ests


def cmd_spectrum(cfg: ExperimentConfig, model_path, out_dir: Path, seed: int | None) -> int:
    sp = cfg.spectrum
    master = sp.seed if seed is None else seed
    estimators = _build_estimators(sp.estimators, cfg, model_path, sp.grid_size, cfg.eval.min_separation_deg)

    from .arrays import SourceSet

    doas = np.asarray(sp.doas, dtype=float)
    scene_rng = as_generator((master, 0, 1))
    sources = SourceSet(np.sort(doas), np.exp(2j * np.pi * scene_rng.random(doas.size)))
    caps = cfg.caps.with_factor(sp.xi)
    realization = sample_imperfections(
        caps, CurriculumStage.ALL_EFFECTS, (master, 0, 0), n_antennas=cfg.array.n_antennas
    )
    snap = synthesize_snapshot(cfg.array, realization, sources, sp.snr_db, (master, 0, 2))

    for name, est in estimators.items():
        spec, _ = est.estimate_one(snap.received)
        spec = spec.normalized()
        _write_csv(
            out_dir / f"spectrum_{name}.csv",
            ["angle_deg", "value"],
            [[float(a), float(v)] for a, v in zip(spec.grid.angles, spec.values)],
        )
    print(f"wrote {len(estimators)} spectra to {out_dir} (seed {master})")
    return 0


def _run_trials(cfg: ExperimentConfig, estimators: dict, xi: float, snr_db: float, master: int):
    caps = cfg.caps.with_factor(xi)
    n = cfg.array.n_antennas
    results = {name: {"errors": [], "truths": [], "times": []} for name in estimators}
    for trial in range(cfg.eval.n_trials):
        realization = sample_imperfections(
            caps, CurriculumStage.ALL_EFFECTS, (master, trial, 0), n_antennas=n
        )
        sources = sample_sources(cfg.policy, (master, trial, 1))
        snap = synthesize_snapshot(cfg.array, realization, sources, snr_db, (master, trial, 2))
        for name, est in estimators.items():
            t0 = time.perf_counter()
            doas = est.predict(snap.received[None, :])[0]
            results[name]["times"].append((time.perf_counter() - t0) * 1e3)
            results[name]["errors"].append(doas)
            results[name]["truths"].append(sources)
    out = {}
    for name, acc in results.items():
        out[name] = (
            rmse(acc["errors"], acc["truths"]),
            float(np.median(acc["times"])),
        )
    return out


def cmd_eval_snr(cfg: ExperimentConfig, model_path, out_dir: Path, seed: int | None) -> int:
    ev = cfg.eval
    master = ev.seed if seed is None else seed
    estimators = _build_estimators(ev.estimators, cfg, model_path, ev.grid_size, ev.min_separation_deg)
    rows = []
    for snr_db in ev.snr_sweep:
        stats = _run_trials(cfg, estimators, cfg.caps.imperfect_factor, float(snr_db), master)
        for name, (err, ms) in stats.items():
            rows.append([name, float(snr_db), err, ev.n_trials, ms])
    rows.sort(key=lambda r: (r[0], r[1]))
    _write_csv(out_dir / "eval_snr.csv", ["estimator", "snr_db", "rmse_deg", "n_trials", "runtime_ms"], rows)
    print(f"wrote {len(rows)} rows to {out_dir / 'eval_snr.csv'} (seed {master})")
    return 0


def cmd_eval_imperfect(cfg: ExperimentConfig, model_path, out_dir: Path, seed: int | None) -> int:
    ev = cfg.eval
    master = ev.seed if seed is None else seed
    estimators = _build_estimators(ev.estimators, cfg, model_path, ev.grid_size, ev.min_separation_deg)
    rows = []
    for xi in ev.xi_sweep:
        stats = _run_trials(cfg, estimators, float(xi), ev.snr_db, master)
        for name, (err, ms) in stats.items():
            rows.append([name, float(xi), err, ev.n_trials, ms])
    rows.sort(key=lambda r: (r[0], r[1]))
    _write_csv(
        out_dir / "eval_imperfect.csv", ["estimator", "xi", "rmse_deg", "n_trials", "runtime_ms"], rows
    )
    print(f"wrote {len(rows)} rows to {out_dir / 'eval_imperfect.csv'} (seed {master})")
    return 0


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdoa",
        description="DOA estimation workbench: simulate, train, and benchmark estimators.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, needs_model=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--model", default=None, help="trained model file")
        p.add_argument(
            "--single-thread",
            action="store_true",
            help="guarantee single-threaded deterministic execution (the default behaviour)",
        )
        return p

    add("simulate", "synthesize a snapshot dataset")
    add("train", "train the spectrum-vector network on the imperfection curriculum")
    add("spectrum", "emit spectrum overlays for one scenario")
    add("eval-snr", "RMSE versus SNR benchmark")
    add("eval-imperfect", "RMSE versus imperfect-factor benchmark")
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "spectrum": cmd_spectrum,
    "eval-snr": cmd_eval_snr,
    "eval-imperfect": cmd_eval_imperfect,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1

    try:
        cfg = load_config(args.config)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command in ("simulate", "train"):
            return _COMMANDS[args.command](cfg, out_dir, args.seed)
        return _COMMANDS[args.command](cfg, args.model, out_dir, args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

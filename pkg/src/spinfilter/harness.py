"""Experiment orchestration: configuration, reproducible ensembles, file output.

Config files are flat ``key = value`` text with dotted sections::

    basis.N = 3
    params.eta = 0.4
    controller.variant = boundary
    initial.kind = eigen-pair
    initial.n = 2

All simulation outputs (per-trajectory CSVs, ensemble-mean CSV,
summary.json) are byte-stable for a fixed (config, seed) at any worker
count; wall-clock goes to a separate timing.txt.
"""

import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ._version import __version__
from .analysis import fit_exponent, per_sample_slopes
from .feedback import (
    ConditionNotMetError,
    ControllerSpec,
    check_hypotheses,
    check_parameter_conditions,
    exponent_bounds,
)
from .integrator import IntegratorConfig, TrajectoryRecord, run_batch_records
from .spin import SpinBasis, build_basis, projector
from .states import CoupledState, SystemParams, random_density, require_valid

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "EnsembleSummary",
    "PRESETS",
    "preset_config",
    "parse_config_text",
    "config_from_dict",
    "config_to_flat_dict",
    "initial_state",
    "run_experiment",
]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    n_dim: int
    params: SystemParams
    controller: ControllerSpec
    initial_kind: str
    initial_args: dict
    integrator: IntegratorConfig
    ensemble: int = 10
    workers: int = 1
    fit_window: float = 0.5
    strict: bool = False
    label: str = "experiment"

    def __post_init__(self):
        if self.ensemble < 1:
            raise ConfigError("ensemble size must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.initial_kind not in ("eigen-pair", "diagonal", "maximally-mixed-pair", "random"):
            raise ConfigError(f"unknown initial state kind {self.initial_kind!r}")


def preset_config(name: str) -> ExperimentConfig:
    """Built-in replication presets (three-level system, mismatched filter)."""
    params = SystemParams(omega=0.4, eta=0.4, M=1.4, omega_hat=0.5, eta_hat=0.5, M_hat=1.5)
    integ = IntegratorConfig(dt=1e-4, t_end=10.0, record_stride=100, seed=0)
    if name == "fig1":
        return ExperimentConfig(
            n_dim=3,
            params=params,
            controller=ControllerSpec(variant="boundary", target=0, alpha=5.0, beta=2.0),
            initial_kind="eigen-pair",
            initial_args={"n": 2, "m": 1},
            integrator=integ,
            ensemble=10,
            label="fig1",
        )
    if name == "fig2":
        return ExperimentConfig(
            n_dim=3,
            params=params,
            controller=ControllerSpec(
                variant="interior", target=1, alpha=5.0, beta=2.0, eps1=0.1, eps2=0.3
            ),
            initial_kind="diagonal",
            initial_args={"rho": [0.2, 0.2, 0.6], "rho_hat": [0.3, 0.3, 0.4]},
            integrator=integ,
            ensemble=10,
            label="fig2",
        )
    raise ConfigError(f"unknown preset {name!r}")


PRESETS = ("fig1", "fig2")


def initial_state(config: ExperimentConfig, basis: SpinBasis) -> CoupledState:
    kind, args = config.initial_kind, config.initial_args
    if kind == "eigen-pair":
        return CoupledState(projector(basis, int(args["n"])), projector(basis, int(args["m"])))
    if kind == "maximally-mixed-pair":
        eye = np.eye(basis.n_dim, dtype=complex) / basis.n_dim
        return CoupledState(eye.copy(), eye.copy())
    if kind == "diagonal":
        rho = np.diag(np.asarray(args["rho"], dtype=float)).astype(complex)
        rho_hat = np.diag(np.asarray(args["rho_hat"], dtype=float)).astype(complex)
        return CoupledState(require_valid(rho), require_valid(rho_hat))
    ss = np.random.SeedSequence(int(args.get("seed", 0)))
    a, b = ss.spawn(2)
    rank = int(args.get("rank", basis.n_dim))
    return CoupledState(
        random_density(basis.n_dim, rank, a), random_density(basis.n_dim, rank, b)
    )


# -- config file round trip ---------------------------------------------------

def parse_config_text(text: str) -> dict:
    """Parse flat dotted key-value lines into a nested-key dict."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def config_from_dict(flat: dict, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Build a config from dotted keys, optionally overriding a preset."""
    def take(key, default):
        return flat.get(key, default)

    if base is None:
        base = preset_config("fig1")
    params = SystemParams(
        omega=float(take("params.omega", base.params.omega)),
        eta=float(take("params.eta", base.params.eta)),
        M=float(take("params.M", base.params.M)),
        omega_hat=float(take("params.omega_hat", base.params.omega_hat)),
        eta_hat=float(take("params.eta_hat", base.params.eta_hat)),
        M_hat=float(take("params.M_hat", base.params.M_hat)),
    )
    controller = ControllerSpec(
        variant=str(take("controller.variant", base.controller.variant)),
        target=int(take("controller.target", base.controller.target)),
        alpha=float(take("controller.alpha", base.controller.alpha)),
        beta=float(take("controller.beta", base.controller.beta)),
        eps1=float(take("controller.eps1", base.controller.eps1)),
        eps2=float(take("controller.eps2", base.controller.eps2)),
    )
    integ = IntegratorConfig(
        dt=float(take("integrator.dt", base.integrator.dt)),
        t_end=float(take("integrator.t_end", base.integrator.t_end)),
        record_stride=int(take("integrator.record_stride", base.integrator.record_stride)),
        renormalize=bool(take("integrator.renormalize", base.integrator.renormalize)),
        psd_projection=bool(take("integrator.psd_projection", base.integrator.psd_projection)),
        seed=int(take("integrator.seed", base.integrator.seed)),
        driving_mode=str(take("integrator.driving_mode", base.integrator.driving_mode)),
    )
    initial_kind = str(take("initial.kind", base.initial_kind))
    initial_args = dict(base.initial_args) if initial_kind == base.initial_kind else {}
    for key, value in flat.items():
        if key.startswith("initial.") and key != "initial.kind":
            initial_args[key.split(".", 1)[1]] = value
    try:
        return ExperimentConfig(
            n_dim=int(take("basis.N", base.n_dim)),
            params=params,
            controller=controller,
            initial_kind=initial_kind,
            initial_args=initial_args,
            integrator=integ,
            ensemble=int(take("ensemble.size", base.ensemble)),
            workers=int(take("ensemble.workers", base.workers)),
            fit_window=float(take("fit.window", base.fit_window)),
            strict=bool(take("strict", base.strict)),
            label=str(take("label", base.label)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def config_to_flat_dict(config: ExperimentConfig) -> dict:
    flat = {
        "basis.N": config.n_dim,
        "params.omega": config.params.omega,
        "params.eta": config.params.eta,
        "params.M": config.params.M,
        "params.omega_hat": config.params.omega_hat,
        "params.eta_hat": config.params.eta_hat,
        "params.M_hat": config.params.M_hat,
        "controller.variant": config.controller.variant,
        "controller.target": config.controller.target,
        "controller.alpha": config.controller.alpha,
        "controller.beta": config.controller.beta,
        "controller.eps1": config.controller.eps1,
        "controller.eps2": config.controller.eps2,
        "initial.kind": config.initial_kind,
        "integrator.dt": config.integrator.dt,
        "integrator.t_end": config.integrator.t_end,
        "integrator.record_stride": config.integrator.record_stride,
        "integrator.renormalize": config.integrator.renormalize,
        "integrator.psd_projection": config.integrator.psd_projection,
        "integrator.seed": config.integrator.seed,
        "integrator.driving_mode": config.integrator.driving_mode,
        "ensemble.size": config.ensemble,
        "ensemble.workers": config.workers,
        "fit.window": config.fit_window,
        "strict": config.strict,
        "label": config.label,
    }
    for key, value in config.initial_args.items():
        flat[f"initial.{key}"] = value
    return flat


# -- ensemble driver ----------------------------------------------------------

@dataclass
class EnsembleSummary:
    label: str
    master_seed: int
    records: list = field(repr=False)
    mean_times: np.ndarray = field(repr=False, default=None)
    mean_columns: dict = field(repr=False, default=None)
    condition_report: object = None
    hypothesis_report: object = None
    exponents: object = None
    mean_fit: object = None
    sample_slopes: np.ndarray = None
    wall_clock: float = 0.0
    engine: str = ""
    files: list = field(default_factory=list)

    @property
    def n_traj(self) -> int:
        return len(self.records)

    def final_coupled_distances(self) -> np.ndarray:
        return np.array([rec.db_coupled_target[-1] for rec in self.records])

    def to_dict(self) -> dict:
        mean_final = {name: float(col[-1]) for name, col in self.mean_columns.items()}
        metrics = {
            "max_trace_defect_post_renorm": max(
                float(r.metrics["max_trace_defect_post_renorm"]) for r in self.records
            ),
            "max_herm_defect": max(float(r.metrics["max_herm_defect"]) for r in self.records),
            "min_eigenvalue": min(float(r.metrics["min_eigenvalue"]) for r in self.records),
        }
        out = {
            "label": self.label,
            "code_version": __version__,
            "engine": self.engine,
            "master_seed": self.master_seed,
            "n_traj": self.n_traj,
            "conditions": self.condition_report.to_dict() if self.condition_report else None,
            "hypotheses": self.hypothesis_report.to_dict() if self.hypothesis_report else None,
            "per_trajectory": {
                "final_dB_coupled_target": [float(x) for x in self.final_coupled_distances()],
                "fit_slopes": [float(s) for s in self.sample_slopes]
                if self.sample_slopes is not None
                else None,
                "flags": [dict(r.flags) for r in self.records],
            },
            "ensemble_mean_final": mean_final,
            "structural_metrics": metrics,
        }
        if self.exponents is not None:
            out["exponent_references"] = {
                "nu_s": self.exponents.nu_s,
                "nu_av": self.exponents.nu_av,
                "rule": self.exponents.rule,
                "constants": {k: float(v) for k, v in self.exponents.constants.items()},
            }
        if self.mean_fit is not None:
            out["ensemble_mean_fit"] = {
                "slope": self.mean_fit.slope,
                "r_squared": self.mean_fit.r_squared,
                "window": list(self.mean_fit.window),
            }
        return out


def _mean_record_columns(records) -> dict:
    names = [name for name, _ in records[0].columns()]
    stacked = {name: [] for name in names}
    for rec in records:
        for name, col in rec.columns():
            stacked[name].append(col)
    return {name: np.mean(np.stack(cols), axis=0) for name, cols in stacked.items()}


def _write_mean_csv(path, mean_cols):
    names = list(mean_cols.keys())
    data = np.column_stack([mean_cols[name] for name in names])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for row in data:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def run_experiment(
    config: ExperimentConfig,
    outdir=None,
    engine_name: Optional[str] = None,
) -> EnsembleSummary:
    """Run a seeded ensemble, write CSVs/summary, return the in-memory summary.

    Parameter-condition failures warn (or raise in strict mode) before the
    run starts. Trajectory blowups are collected into a failure manifest
    instead of aborting the whole ensemble.
    """
    t_start = time.perf_counter()
    basis = build_basis(config.n_dim)
    if config.controller.target >= config.n_dim:
        raise ConfigError("controller target out of range")
    init = initial_state(config, basis)

    condition_report = check_parameter_conditions(
        config.n_dim, config.params, config.controller.target
    )
    hypothesis_report = check_hypotheses(config.controller, basis)
    boundary_target = config.controller.target in (0, config.n_dim - 1)
    needed_hypotheses = {
        "h0-equilibrium-set",
        "h1-power-bound" if boundary_target else "h2-dead-zone",
    }
    problems = [r.format() for r in condition_report.rows if r.applicable and not r.ok]
    problems += [
        r.format()
        for r in hypothesis_report.rows
        if r.name in needed_hypotheses and not r.ok
    ]
    if problems:
        message = "condition checks failed:\n" + "\n".join(problems)
        if config.strict:
            raise ConfigError(message)
        warnings.warn(message)

    exponents = None
    try:
        exponents = exponent_bounds(config.n_dim, config.params, config.controller.target)
    except (ConditionNotMetError, ValueError):
        pass

    indices = list(range(config.ensemble))
    chunks = [
        indices[k : k + max(1, -(-len(indices) // config.workers))]
        for k in range(0, len(indices), max(1, -(-len(indices) // config.workers)))
    ]

    def run_chunk(chunk):
        return run_batch_records(
            [init] * len(chunk),
            config.controller,
            config.params,
            basis,
            config.integrator,
            indices=chunk,
            engine_name=engine_name,
            raise_on_blowup=False,
        )[0]

    records = [None] * config.ensemble
    if config.workers == 1 or len(chunks) == 1:
        chunk_results = [run_chunk(chunk) for chunk in chunks]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            chunk_results = list(pool.map(run_chunk, chunks))
    for chunk, recs in zip(chunks, chunk_results):
        for idx, rec in zip(chunk, recs):
            records[idx] = rec

    mean_cols = _mean_record_columns(records)
    mean_coupled = mean_cols["dB_true_target"] + mean_cols["dB_filter_target"]
    times = records[0].times
    mean_fit = None
    sample_slopes = None
    try:
        mean_fit = fit_exponent(times, mean_coupled, config.fit_window, mode="ensemble-mean")
        sample_slopes = per_sample_slopes(records, config.fit_window)
    except ValueError:
        pass

    summary = EnsembleSummary(
        label=config.label,
        master_seed=config.integrator.seed,
        records=records,
        mean_times=times,
        mean_columns=mean_cols,
        condition_report=condition_report,
        hypothesis_report=hypothesis_report,
        exponents=exponents,
        mean_fit=mean_fit,
        sample_slopes=sample_slopes,
        engine=records[0].flags.get("engine", ""),
    )
    summary.wall_clock = time.perf_counter() - t_start

    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        width = max(3, len(str(config.ensemble - 1)))
        for idx, rec in enumerate(records):
            path = outdir / f"traj_{idx:0{width}d}.csv"
            rec.to_csv(path)
            summary.files.append(str(path))
        mean_path = outdir / "mean.csv"
        _write_mean_csv(mean_path, mean_cols)
        summary.files.append(str(mean_path))
        payload = summary.to_dict()
        payload["config"] = config_to_flat_dict(config)
        failures = [
            {"trajectory": i, "blowup_t": rec.flags["blowup_t"]}
            for i, rec in enumerate(records)
            if "blowup_t" in rec.flags
        ]
        payload["failure_manifest"] = failures
        summary_path = outdir / "summary.json"
        with open(summary_path, "w") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")
        summary.files.append(str(summary_path))
        with open(outdir / "timing.txt", "w") as fh:
            fh.write(f"wall_clock_seconds = {summary.wall_clock:.3f}\n")
    return summary

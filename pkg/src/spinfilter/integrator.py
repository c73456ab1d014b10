"""Time stepping of the coupled system: Euler-Maruyama for the SDE (two
driving modes), RK4 for the deterministic control-affine system, plus the
per-step renormalization hygiene and trajectory recording."""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import engine
from .dynamics import (
    deterministic_rhs,
    diffusion_G,
    drift_L,
    filter_correction,
    observation_increment,
)
from .feedback import ControllerSpec, evaluate_control
from .spin import SpinBasis
from .states import CoupledState, SystemParams, expect_jz

__all__ = [
    "IntegratorConfig",
    "TrajectoryRecord",
    "SimulationBlowupError",
    "renormalize",
    "step_coupled",
    "noise_increments",
    "run_trajectory",
    "run_batch_records",
    "run_deterministic",
]

MODES = ("shared-wiener", "observation-driven")


class SimulationBlowupError(RuntimeError):
    """Integration left the validity region; carries the failing time."""

    def __init__(self, message: str, t: float = math.nan):
        super().__init__(message)
        self.t = t


@dataclass(frozen=True)
class IntegratorConfig:
    """Stepping parameters. Times are in the same units as 1/M."""

    dt: float = 1e-4
    t_end: float = 10.0
    record_stride: int = 100
    renormalize: bool = True
    psd_projection: bool = False
    seed: int = 0
    driving_mode: str = "shared-wiener"

    def __post_init__(self):
        if self.dt <= 0 or self.t_end < self.dt:
            raise ValueError("need 0 < dt <= t_end")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if self.driving_mode not in MODES:
            raise ValueError(f"driving_mode must be one of {MODES}")
        if self.n_steps % self.record_stride != 0:
            raise ValueError(
                f"record_stride {self.record_stride} does not divide {self.n_steps} steps"
            )

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class TrajectoryRecord:
    """Time-sampled series of one coupled trajectory."""

    times: np.ndarray
    pop_rho: np.ndarray          # (n_rec, N)
    pop_rhohat: np.ndarray
    db_true_target: np.ndarray
    db_filter_target: np.ndarray
    db_true_filter: np.ndarray
    u: np.ndarray
    tr_jz_rho: np.ndarray
    y: np.ndarray
    purity_rho: np.ndarray
    purity_rhohat: np.ndarray
    seed: object
    config: dict
    flags: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)

    @property
    def n_dim(self) -> int:
        return self.pop_rho.shape[1]

    @property
    def db_coupled_target(self) -> np.ndarray:
        return self.db_true_target + self.db_filter_target

    def columns(self):
        n = self.n_dim
        cols = [("t", self.times)]
        cols += [(f"rho_pop_{k}", self.pop_rho[:, k]) for k in range(n)]
        cols += [(f"rhohat_pop_{k}", self.pop_rhohat[:, k]) for k in range(n)]
        cols += [
            ("dB_true_target", self.db_true_target),
            ("dB_filter_target", self.db_filter_target),
            ("dB_true_filter", self.db_true_filter),
            ("u", self.u),
            ("trJzRho", self.tr_jz_rho),
            ("Y", self.y),
            ("purity_rho", self.purity_rho),
            ("purity_rhohat", self.purity_rhohat),
        ]
        return cols

    def to_csv(self, path):
        cols = self.columns()
        header = ",".join(name for name, _ in cols)
        data = np.column_stack([arr for _, arr in cols])
        with open(path, "w", newline="") as fh:
            fh.write(header + "\n")
            for row in data:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    def summary(self) -> dict:
        return {
            "final_dB_true_target": float(self.db_true_target[-1]),
            "final_dB_filter_target": float(self.db_filter_target[-1]),
            "final_dB_true_filter": float(self.db_true_filter[-1]),
            "final_dB_coupled_target": float(self.db_coupled_target[-1]),
            "seed": self.seed,
            "flags": dict(self.flags),
            "metrics": {k: float(v) for k, v in self.metrics.items()},
            "config": dict(self.config),
        }


def renormalize(rho: np.ndarray, psd_projection: bool = False) -> np.ndarray:
    """Hermitize, normalize the trace, optionally clip negative eigenvalues."""
    defect = float(np.max(np.abs(rho - rho.conj().T)))
    if defect >= 0.1:
        raise SimulationBlowupError(
            f"Hermiticity defect {defect:.3g} beyond repair; reduce dt"
        )
    rho = 0.5 * (rho + rho.conj().T)
    tr = float(np.real(np.trace(rho)))
    if tr <= 0.0:
        raise SimulationBlowupError(f"state trace {tr:.3g} <= 0; reduce dt")
    rho = rho / tr
    if psd_projection:
        w, v = np.linalg.eigh(rho)
        w = np.clip(w, 0.0, None)
        w /= np.sum(w)
        rho = (v * w) @ v.conj().T
    return rho


def step_coupled(
    state: CoupledState,
    spec: ControllerSpec,
    params: SystemParams,
    basis: SpinBasis,
    dt: float,
    dW: float,
    mode: str = "shared-wiener",
    renorm: bool = True,
) -> CoupledState:
    """One explicit step with the control frozen at the current filter state.

    Reference implementation; the engines repeat this arithmetic in batch.
    """
    rho, rho_hat = state
    u = evaluate_control(spec, basis, rho_hat)
    l_r = drift_L(basis, rho, u, params.omega, params.M)
    l_h = drift_L(basis, rho_hat, u, params.omega_hat, params.M_hat)
    g_r = diffusion_G(basis, rho, params.eta, params.M)
    g_h = diffusion_G(basis, rho_hat, params.eta_hat, params.M_hat)
    if mode == "shared-wiener":
        corr = filter_correction(basis, rho, rho_hat, params)
        rho_new = rho + l_r * dt + g_r * dW
        rho_hat_new = rho_hat + l_h * dt + g_h * dW + corr * dt
    elif mode == "observation-driven":
        dy = observation_increment(basis, rho, params, dW, dt)
        innov_true = dy - 2.0 * params.root_em * expect_jz(basis, rho) * dt
        innov_filt = dy - 2.0 * params.root_em_hat * expect_jz(basis, rho_hat) * dt
        rho_new = rho + l_r * dt + g_r * innov_true
        rho_hat_new = rho_hat + l_h * dt + g_h * innov_filt
    else:
        raise ValueError(f"unknown driving mode {mode!r}")
    _check_hard_limits(rho_new)
    _check_hard_limits(rho_hat_new)
    if renorm:
        rho_new = renormalize(rho_new)
        rho_hat_new = renormalize(rho_hat_new)
    return CoupledState(rho=rho_new, rho_hat=rho_hat_new)


def _check_hard_limits(rho: np.ndarray):
    defect = abs(float(np.real(np.trace(rho))) - 1.0)
    if not defect <= 0.1:
        raise SimulationBlowupError(f"trace defect {defect:.3g} > 0.1; reduce dt")
    min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))))
    if min_eig < -0.1:
        raise SimulationBlowupError(f"min eigenvalue {min_eig:.3g} < -0.1; reduce dt")


def noise_increments(seed, index: int, n_steps: int, dt: float) -> np.ndarray:
    """Wiener increments for trajectory ``index`` of a seeded ensemble.

    Streams are indexed, so ensembles reproduce under any execution order.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(int(index),))
    rng = np.random.default_rng(ss)
    return rng.standard_normal(n_steps) * math.sqrt(dt)


def _bures_pairs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Bures distance between matched pairs of states, batched over axis 0."""
    w, v = np.linalg.eigh(a)
    w = np.clip(w, 0.0, None)
    sa = np.einsum("kij,kj,klj->kil", v, np.sqrt(w), v.conj())
    ev = np.linalg.eigvalsh(sa @ b @ sa)
    fid = np.clip(np.sum(np.sqrt(np.clip(ev, 0.0, None)), axis=1), 0.0, 1.0)
    return np.sqrt(np.maximum(0.0, 2.0 - 2.0 * fid))


def _pure_dist(pop: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(0.0, 2.0 - 2.0 * np.sqrt(np.clip(pop, 0.0, 1.0))))


def _record_from_raw(
    result, lane, times, basis, target, seed, config_echo, extra_flags=None
) -> TrajectoryRecord:
    snaps_r = result.snaps_rho[lane]
    snaps_h = result.snaps_rhohat[lane]
    pop_r = np.real(np.diagonal(snaps_r, axis1=1, axis2=2)).copy()
    pop_h = np.real(np.diagonal(snaps_h, axis1=1, axis2=2)).copy()
    record = TrajectoryRecord(
        times=times,
        pop_rho=pop_r,
        pop_rhohat=pop_h,
        db_true_target=_pure_dist(pop_r[:, target]),
        db_filter_target=_pure_dist(pop_h[:, target]),
        db_true_filter=_bures_pairs(snaps_r, snaps_h),
        u=result.u_rec[lane].copy(),
        tr_jz_rho=pop_r @ basis.z,
        y=result.y_rec[lane].copy(),
        purity_rho=np.real(np.einsum("kij,kji->k", snaps_r, snaps_r)),
        purity_rhohat=np.real(np.einsum("kij,kji->k", snaps_h, snaps_h)),
        seed=seed,
        config=config_echo,
        flags=dict(extra_flags or {}),
        metrics={
            "max_trace_defect_pre_renorm": result.max_trace_defect_pre[lane],
            "max_trace_defect_post_renorm": result.max_trace_defect_post[lane],
            "max_herm_defect": result.max_herm_defect[lane],
            "min_eigenvalue": result.min_eig[lane],
        },
    )
    record.flags["engine"] = result.engine
    return record


def _fill_min_eig_from_snaps(result):
    """For dimensions without closed-form tracking, bound min eig at record points."""
    if not np.all(np.isinf(result.min_eig)):
        return
    snaps = np.concatenate([result.snaps_rho, result.snaps_rhohat], axis=1)
    flat = snaps.reshape(-1, snaps.shape[-2], snaps.shape[-1])
    herm = 0.5 * (flat + np.conj(np.transpose(flat, (0, 2, 1))))
    eigs = np.linalg.eigvalsh(herm).min(axis=1).reshape(snaps.shape[0], -1)
    result.min_eig = eigs.min(axis=1)


def _spurious_start_flag(initial: CoupledState, target: int) -> bool:
    """Exact spurious-equilibrium start (rho an off-target eigenprojector, filter on target)."""
    n = initial.rho.shape[0]
    for m in range(n):
        if m == target:
            continue
        proj = np.zeros((n, n), dtype=complex)
        proj[m, m] = 1.0
        proj_t = np.zeros((n, n), dtype=complex)
        proj_t[target, target] = 1.0
        if np.array_equal(initial.rho, proj) and np.array_equal(initial.rho_hat, proj_t):
            return True
    return False


def run_trajectory(
    initial: CoupledState,
    spec: ControllerSpec,
    params: SystemParams,
    basis: SpinBasis,
    config: IntegratorConfig,
    traj_index: int = 0,
    engine_name: Optional[str] = None,
    watch: Optional[engine.WatchSpec] = None,
) -> TrajectoryRecord:
    """Integrate one trajectory; deterministic given (seed, traj_index, config)."""
    n_steps = config.n_steps
    dw = noise_increments(config.seed, traj_index, n_steps, config.dt)[None, :]
    result = engine.run_batch(
        basis,
        params,
        spec,
        initial.rho[None],
        initial.rho_hat[None],
        dw,
        config.dt,
        config.record_stride,
        mode=config.driving_mode,
        renormalize=config.renormalize,
        watch=watch,
        psd_projection=config.psd_projection,
        engine=engine_name,
    )
    if result.blow_step[0] >= 0:
        raise SimulationBlowupError(
            "trajectory left the validity region; reduce dt",
            t=float(result.blow_step[0]) * config.dt,
        )
    _fill_min_eig_from_snaps(result)
    times = np.arange(n_steps // config.record_stride + 1) * (config.dt * config.record_stride)
    flags = {}
    if _spurious_start_flag(initial, spec.target):
        flags["spurious_equilibrium_start"] = True
    record = _record_from_raw(
        result,
        0,
        times,
        basis,
        spec.target,
        seed=(config.seed, traj_index),
        config_echo=_config_echo(config, spec, params),
        extra_flags=flags,
    )
    if watch is not None:
        record.flags["watch_step"] = int(result.watch_step[0])
    return record


def _config_echo(config: IntegratorConfig, spec: ControllerSpec, params: SystemParams) -> dict:
    return {
        "dt": config.dt,
        "t_end": config.t_end,
        "record_stride": config.record_stride,
        "renormalize": config.renormalize,
        "psd_projection": config.psd_projection,
        "seed": config.seed,
        "driving_mode": config.driving_mode,
        "controller": spec.variant,
        "target": spec.target,
        "alpha": spec.alpha,
        "beta": spec.beta,
        "params": [params.omega, params.eta, params.M, params.omega_hat, params.eta_hat, params.M_hat],
    }


def run_batch_records(
    initials,
    spec: ControllerSpec,
    params: SystemParams,
    basis: SpinBasis,
    config: IntegratorConfig,
    indices=None,
    engine_name: Optional[str] = None,
    watch: Optional[engine.WatchSpec] = None,
    raise_on_blowup: bool = True,
):
    """Integrate many trajectories at once; returns (records, BatchResult)."""
    batch = len(initials)
    indices = list(range(batch)) if indices is None else list(indices)
    n_steps = config.n_steps
    dw = np.stack(
        [noise_increments(config.seed, i, n_steps, config.dt) for i in indices]
    )
    rho0 = np.stack([s.rho for s in initials])
    rhohat0 = np.stack([s.rho_hat for s in initials])
    result = engine.run_batch(
        basis,
        params,
        spec,
        rho0,
        rhohat0,
        dw,
        config.dt,
        config.record_stride,
        mode=config.driving_mode,
        renormalize=config.renormalize,
        watch=watch,
        psd_projection=config.psd_projection,
        engine=engine_name,
    )
    if raise_on_blowup and np.any(result.blow_step >= 0):
        lane = int(np.argmax(result.blow_step >= 0))
        raise SimulationBlowupError(
            f"trajectory {indices[lane]} left the validity region; reduce dt",
            t=float(result.blow_step[lane]) * config.dt,
        )
    _fill_min_eig_from_snaps(result)
    times = np.arange(n_steps // config.record_stride + 1) * (config.dt * config.record_stride)
    echo = _config_echo(config, spec, params)
    records = []
    for lane, idx in enumerate(indices):
        rec = _record_from_raw(
            result, lane, times, basis, spec.target, seed=(config.seed, idx), config_echo=echo
        )
        if watch is not None:
            rec.flags["watch_step"] = int(result.watch_step[lane])
        if result.blow_step[lane] >= 0:
            rec.flags["blowup_t"] = float(result.blow_step[lane]) * config.dt
        records.append(rec)
    return records, result


def run_deterministic(
    initial: CoupledState,
    spec: ControllerSpec,
    params: SystemParams,
    basis: SpinBasis,
    control: Callable[[float], float],
    dt: float,
    t_end: float,
    record_stride: int = 10,
    control_mode: str = "v",
) -> TrajectoryRecord:
    """RK4 integration of the deterministic coupled control system.

    ``control`` is a (piecewise-constant) function of time. With
    control_mode="v" it supplies v(t) and the drive is
    V(t) = v(t) + 2 sqrt(eta M) Tr(Jz rho); with control_mode="V" it
    supplies V(t) directly.
    """
    if control_mode not in ("v", "V"):
        raise ValueError("control_mode must be 'v' or 'V'")
    n_steps = int(round(t_end / dt))
    if n_steps % record_stride != 0:
        raise ValueError("record_stride must divide the number of steps")

    def rhs(rho, rho_hat, t):
        u = evaluate_control(spec, basis, rho_hat)
        v_val = control(t)
        if control_mode == "v":
            v_val = v_val + 2.0 * params.root_em * expect_jz(basis, rho)
        d_rho = deterministic_rhs(basis, rho, u, v_val, params.omega, params.eta, params.M)
        d_hat = deterministic_rhs(
            basis, rho_hat, u, v_val, params.omega_hat, params.eta_hat, params.M_hat
        )
        return d_rho, d_hat, u

    n_rec = n_steps // record_stride + 1
    n = basis.n_dim
    snaps_r = np.empty((n_rec, n, n), dtype=complex)
    snaps_h = np.empty((n_rec, n, n), dtype=complex)
    u_rec = np.empty(n_rec)
    rho, rho_hat = np.array(initial.rho, dtype=complex), np.array(initial.rho_hat, dtype=complex)
    rec = 0
    for step in range(n_steps + 1):
        t = step * dt
        if step % record_stride == 0:
            snaps_r[rec] = rho
            snaps_h[rec] = rho_hat
            u_rec[rec] = evaluate_control(spec, basis, rho_hat)
            rec += 1
        if step == n_steps:
            break
        k1r, k1h, _ = rhs(rho, rho_hat, t)
        k2r, k2h, _ = rhs(rho + 0.5 * dt * k1r, rho_hat + 0.5 * dt * k1h, t + 0.5 * dt)
        k3r, k3h, _ = rhs(rho + 0.5 * dt * k2r, rho_hat + 0.5 * dt * k2h, t + 0.5 * dt)
        k4r, k4h, _ = rhs(rho + dt * k3r, rho_hat + dt * k3h, t + dt)
        rho = rho + dt / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r)
        rho_hat = rho_hat + dt / 6.0 * (k1h + 2.0 * k2h + 2.0 * k3h + k4h)
        if not abs(float(np.real(np.trace(rho))) - 1.0) <= 0.1:
            raise SimulationBlowupError("deterministic step blew up; reduce dt", t=t)

    times = np.arange(n_rec) * (dt * record_stride)
    pop_r = np.real(np.diagonal(snaps_r, axis1=1, axis2=2)).copy()
    pop_h = np.real(np.diagonal(snaps_h, axis1=1, axis2=2)).copy()
    return TrajectoryRecord(
        times=times,
        pop_rho=pop_r,
        pop_rhohat=pop_h,
        db_true_target=_pure_dist(pop_r[:, spec.target]),
        db_filter_target=_pure_dist(pop_h[:, spec.target]),
        db_true_filter=_bures_pairs(snaps_r, snaps_h),
        u=u_rec,
        tr_jz_rho=pop_r @ basis.z,
        y=np.zeros(n_rec),
        purity_rho=np.real(np.einsum("kij,kji->k", snaps_r, snaps_r)),
        purity_rhohat=np.real(np.einsum("kij,kji->k", snaps_h, snaps_h)),
        seed=None,
        config={"dt": dt, "t_end": t_end, "mode": "deterministic", "control_mode": control_mode},
        metrics={
            "max_trace_defect": float(
                np.max(np.abs(np.einsum("knn->k", snaps_r).real - 1.0))
            ),
            "max_trace_defect_filter": float(
                np.max(np.abs(np.einsum("knn->k", snaps_h).real - 1.0))
            ),
        },
    )

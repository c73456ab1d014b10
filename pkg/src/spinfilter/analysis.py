"""Lyapunov functions, infinitesimal generators, exponent fits, and
first-passage probes for the coupled system.

The closed-form generators come from the population dynamics of the coupled
SDE. Writing a = rho_{n,n}, a^ = rho^_{n,n}, P_n = J - n - <Jz>, and
T = sqrt(eta M)<Jz>_rho - sqrt(eta^ M^)<Jz>_rho^:

    d a  = -u Theta_n(rho) dt + 2 sqrt(eta M) P_n(rho) a dW
    d a^ = (-u Theta_n(rho^) + 4 sqrt(eta^ M^) P_n(rho^) T a^) dt
           + 2 sqrt(eta^ M^) P_n(rho^) a^ dW

Both components ride the same Wiener process, so Ito cross terms between
rho- and rho^-coordinates use the product of their diffusion coefficients.
A Monte Carlo generator estimate (E[phi(X_dt)] - phi(X_0))/dt serves as a
brute-force oracle against every closed form.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import engine
from .feedback import (
    ConditionNotMetError,
    ControllerSpec,
    check_hypotheses,
    check_parameter_conditions,
    evaluate_control,
)
from .integrator import IntegratorConfig, run_batch_records
from .spin import SpinBasis, projector
from .states import (
    CoupledState,
    SystemParams,
    coupled_distance,
    functionals,
    innovation_gap,
    random_density,
)

__all__ = [
    "LYAPUNOV_TAGS",
    "LyapunovId",
    "lyapunov_value",
    "lyapunov_bounds_check",
    "lyapunov_generator",
    "generator_population",
    "generator_oracle",
    "generator_qv_oracle",
    "OracleEstimate",
    "phi_population",
    "phi_lyapunov",
    "FitResult",
    "fit_exponent",
    "per_sample_slopes",
    "ProbeStatistics",
    "exit_time_probe",
    "hitting_time_probe",
]

LYAPUNOV_TAGS = (
    "V_sqrt_joint",      # sqrt(2 - a - a^)
    "V_sqrt_sum",        # sqrt(1-a) + sqrt(1-a^)
    "V_mixed_asym",      # (1-a) + sqrt(1-a^)
    "V_offdiag_sum",     # sum_{n != nbar} sqrt(rho_nn) + sqrt(rho^_nn)
    "V_mixed_interior",  # (1-a) + sum_{n != nbar} sqrt(rho^_nn)
)
_BOUNDARY_ONLY = ("V_sqrt_joint", "V_sqrt_sum", "V_mixed_asym")


@dataclass(frozen=True)
class LyapunovId:
    tag: str
    target: int

    def __post_init__(self):
        if self.tag not in LYAPUNOV_TAGS:
            raise ValueError(f"unknown Lyapunov tag {self.tag!r}")


def _check_compat(lid: LyapunovId, n_dim: int):
    if not 0 <= lid.target < n_dim:
        raise ValueError(f"target {lid.target} out of range for N={n_dim}")
    if lid.tag in _BOUNDARY_ONLY and lid.target not in (0, n_dim - 1):
        raise ValueError(f"{lid.tag} requires an extreme target eigenstate")


def _pops(state: CoupledState, lid: LyapunovId):
    a = float(np.real(state.rho[lid.target, lid.target]))
    a_hat = float(np.real(state.rho_hat[lid.target, lid.target]))
    return a, a_hat


def lyapunov_value(lid: LyapunovId, state: CoupledState) -> float:
    """Evaluate the selected Lyapunov function; zero only at the target pair."""
    n_dim = state.rho.shape[0]
    _check_compat(lid, n_dim)
    a, a_hat = _pops(state, lid)
    if lid.tag == "V_sqrt_joint":
        return math.sqrt(max(0.0, 2.0 - a - a_hat))
    if lid.tag == "V_sqrt_sum":
        return math.sqrt(max(0.0, 1.0 - a)) + math.sqrt(max(0.0, 1.0 - a_hat))
    if lid.tag == "V_mixed_asym":
        return (1.0 - a) + math.sqrt(max(0.0, 1.0 - a_hat))
    off = [n for n in range(n_dim) if n != lid.target]
    sum_r = sum(math.sqrt(max(0.0, float(np.real(state.rho[n, n])))) for n in off)
    sum_h = sum(math.sqrt(max(0.0, float(np.real(state.rho_hat[n, n])))) for n in off)
    if lid.tag == "V_offdiag_sum":
        return sum_r + sum_h
    return (1.0 - a) + sum_h  # V_mixed_interior


@dataclass(frozen=True)
class BoundsCheck:
    value: float
    distance: float
    lower: float
    upper: Optional[float]
    ok: bool


def lyapunov_bounds_check(lid: LyapunovId, state: CoupledState) -> BoundsCheck:
    """Verify the sandwich bounds tying V to the coupled Bures distance."""
    n_dim = state.rho.shape[0]
    _check_compat(lid, n_dim)
    target = CoupledState(
        rho=_projector(n_dim, lid.target), rho_hat=_projector(n_dim, lid.target)
    )
    d = coupled_distance(state, target)
    v = lyapunov_value(lid, state)
    two_j = n_dim - 1
    tol = 1e-12
    if lid.tag == "V_sqrt_joint":
        lower, upper = 0.5 * d, d
    elif lid.tag == "V_sqrt_sum":
        lower, upper = math.sqrt(0.5) * d, d
    elif lid.tag == "V_offdiag_sum":
        lower, upper = math.sqrt(0.5) * d, math.sqrt(two_j) * d
    else:
        # class-K quadratic lower bound: 1 - a >= (2 - 2 sqrt(a)) / 2 per
        # component, hence V >= d^2 / 4 (tight at maximal distance)
        lower, upper = 0.25 * d * d, None
    ok = v >= lower - tol and (upper is None or v <= upper + tol)
    return BoundsCheck(value=v, distance=d, lower=lower, upper=upper, ok=ok)


def _projector(n_dim, n):
    p = np.zeros((n_dim, n_dim), dtype=complex)
    p[n, n] = 1.0
    return p


def generator_population(
    basis: SpinBasis,
    params: SystemParams,
    state: CoupledState,
    n: int,
    which: str = "true",
    u: float = 0.0,
):
    """Closed-form Ito drift and diffusion coefficient of population n."""
    if which not in ("true", "filter"):
        raise ValueError("which must be 'true' or 'filter'")
    if which == "true":
        f = functionals(basis, state.rho, n)
        a = float(np.real(state.rho[n, n]))
        drift = -u * f.theta
        diffusion = 2.0 * params.root_em * f.p * a
    else:
        f = functionals(basis, state.rho_hat, n)
        a = float(np.real(state.rho_hat[n, n]))
        gap = innovation_gap(params, basis, state.rho, state.rho_hat)
        drift = -u * f.theta + 4.0 * params.root_em_hat * f.p * gap * a
        diffusion = 2.0 * params.root_em_hat * f.p * a
    return drift, diffusion


def lyapunov_generator(
    lid: LyapunovId,
    state: CoupledState,
    params: SystemParams,
    basis: SpinBasis,
    u: float,
) -> float:
    """Closed-form generator of the selected Lyapunov function.

    Valid on the smooth domain of the tag (populations entering square
    roots bounded away from their branch points).
    """
    n_dim = basis.n_dim
    _check_compat(lid, n_dim)
    nbar = lid.target

    def mu_sigma(n):
        mu_r, sig_r = generator_population(basis, params, state, n, "true", u)
        mu_h, sig_h = generator_population(basis, params, state, n, "filter", u)
        return mu_r, sig_r, mu_h, sig_h

    a = float(np.real(state.rho[nbar, nbar]))
    a_hat = float(np.real(state.rho_hat[nbar, nbar]))
    mu_a, sig_a, mu_ah, sig_ah = mu_sigma(nbar)

    if lid.tag == "V_sqrt_joint":
        h = 2.0 - a - a_hat
        mu_h = -(mu_a + mu_ah)
        sig_h = -(sig_a + sig_ah)
        return mu_h / (2.0 * math.sqrt(h)) - sig_h**2 / (8.0 * h**1.5)
    if lid.tag == "V_sqrt_sum":
        return (
            -mu_a / (2.0 * math.sqrt(1.0 - a))
            - sig_a**2 / (8.0 * (1.0 - a) ** 1.5)
            - mu_ah / (2.0 * math.sqrt(1.0 - a_hat))
            - sig_ah**2 / (8.0 * (1.0 - a_hat) ** 1.5)
        )
    if lid.tag == "V_mixed_asym":
        return (
            -mu_a
            - mu_ah / (2.0 * math.sqrt(1.0 - a_hat))
            - sig_ah**2 / (8.0 * (1.0 - a_hat) ** 1.5)
        )
    total = 0.0
    for n in range(n_dim):
        if n == nbar:
            continue
        mu_r, sig_r, mu_h, sig_h = mu_sigma(n)
        p_r = float(np.real(state.rho[n, n]))
        p_h = float(np.real(state.rho_hat[n, n]))
        term_h = mu_h / (2.0 * math.sqrt(p_h)) - sig_h**2 / (8.0 * p_h**1.5)
        if lid.tag == "V_offdiag_sum":
            total += mu_r / (2.0 * math.sqrt(p_r)) - sig_r**2 / (8.0 * p_r**1.5) + term_h
        else:  # V_mixed_interior
            total += term_h
    if lid.tag == "V_mixed_interior":
        total += -mu_a
    return total


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    stderr: float
    n_samples: int

    def agrees_with(self, closed_form: float, n_sigma: float = 3.0) -> bool:
        return abs(self.value - closed_form) <= n_sigma * self.stderr


def phi_population(n: int, which: str = "true") -> Callable:
    """Batched observable: population n of the chosen component."""

    def phi(rho_b, rhohat_b):
        m = rho_b if which == "true" else rhohat_b
        return np.real(m[:, n, n])

    return phi


def phi_lyapunov(lid: LyapunovId) -> Callable:
    """Batched observable: the selected Lyapunov function."""

    def phi(rho_b, rhohat_b):
        a = np.clip(np.real(rho_b[:, lid.target, lid.target]), 0.0, 1.0)
        a_hat = np.clip(np.real(rhohat_b[:, lid.target, lid.target]), 0.0, 1.0)
        if lid.tag == "V_sqrt_joint":
            return np.sqrt(np.maximum(0.0, 2.0 - a - a_hat))
        if lid.tag == "V_sqrt_sum":
            return np.sqrt(1.0 - a) + np.sqrt(1.0 - a_hat)
        if lid.tag == "V_mixed_asym":
            return (1.0 - a) + np.sqrt(1.0 - a_hat)
        n_dim = rho_b.shape[1]
        off = [n for n in range(n_dim) if n != lid.target]
        sum_h = sum(
            np.sqrt(np.clip(np.real(rhohat_b[:, n, n]), 0.0, None)) for n in off
        )
        if lid.tag == "V_mixed_interior":
            return (1.0 - a) + sum_h
        sum_r = sum(np.sqrt(np.clip(np.real(rho_b[:, n, n]), 0.0, None)) for n in off)
        return sum_r + sum_h

    return phi


def generator_oracle(
    phi: Callable,
    state: CoupledState,
    spec: ControllerSpec,
    params: SystemParams,
    basis: SpinBasis,
    dt: float = 1e-5,
    n_samples: int = 100_000,
    seed: int = 0,
    antithetic: bool = True,
) -> OracleEstimate:
    """Monte Carlo estimate of (E[phi(X_dt)] - phi(X_0)) / dt.

    ``phi`` maps batches (rho (K,N,N), rho_hat (K,N,N)) to (K,) values.
    Antithetic +/- dW pairs cancel the O(sqrt(dt)) term, tightening the
    standard error without biasing the estimate.
    """
    half = n_samples // 2 if antithetic else n_samples
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    dw_half = rng.standard_normal(half) * math.sqrt(dt)
    dw = np.concatenate([dw_half, -dw_half]) if antithetic else dw_half
    batch = dw.shape[0]
    rho0 = np.broadcast_to(state.rho, (batch, *state.rho.shape)).copy()
    rhohat0 = np.broadcast_to(state.rho_hat, (batch, *state.rho_hat.shape)).copy()
    result = engine.run_batch(
        basis,
        params,
        spec,
        rho0,
        rhohat0,
        dw[:, None],
        dt,
        record_stride=1,
        renormalize=False,
    )
    vals = np.asarray(phi(result.snaps_rho[:, 1], result.snaps_rhohat[:, 1]), dtype=float)
    phi0 = float(np.asarray(phi(state.rho[None], state.rho_hat[None]))[0])
    samples = 0.5 * (vals[:half] + vals[half:]) if antithetic else vals
    est = (float(np.mean(samples)) - phi0) / dt
    se = float(np.std(samples, ddof=1)) / math.sqrt(len(samples)) / dt
    # For observables linear in the state, antithetic pairing cancels the
    # noise exactly and the raw spread collapses to rounding; floor the
    # standard error at the float cancellation scale of (phi_dt - phi_0)/dt.
    se = max(se, 8.0 * np.finfo(float).eps * max(1.0, abs(phi0)) / dt)
    return OracleEstimate(value=est, stderr=se, n_samples=n_samples)


def generator_qv_oracle(
    phi: Callable,
    state: CoupledState,
    spec: ControllerSpec,
    params: SystemParams,
    basis: SpinBasis,
    dt: float = 1e-5,
    n_samples: int = 100_000,
    seed: int = 0,
) -> OracleEstimate:
    """Monte Carlo estimate of the squared diffusion coefficient of phi.

    Centered quadratic-variation estimator Var[phi(X_dt)] / dt (centering
    removes the drift^2 dt bias); compare against the square of the
    closed-form diffusion coefficient.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    dw = rng.standard_normal(n_samples) * math.sqrt(dt)
    rho0 = np.broadcast_to(state.rho, (n_samples, *state.rho.shape)).copy()
    rhohat0 = np.broadcast_to(state.rho_hat, (n_samples, *state.rho_hat.shape)).copy()
    result = engine.run_batch(
        basis,
        params,
        spec,
        rho0,
        rhohat0,
        dw[:, None],
        dt,
        record_stride=1,
        renormalize=False,
    )
    vals = np.asarray(phi(result.snaps_rho[:, 1], result.snaps_rhohat[:, 1]), dtype=float)
    phi0 = float(np.asarray(phi(state.rho[None], state.rho_hat[None]))[0])
    centered = (vals - phi0) - float(np.mean(vals - phi0))
    est = float(np.sum(centered**2)) / (n_samples - 1) / dt
    se = float(np.std(centered**2, ddof=1)) / math.sqrt(n_samples) / dt
    se = max(se, 8.0 * np.finfo(float).eps * max(1.0, abs(phi0)) / dt)
    return OracleEstimate(value=est, stderr=se, n_samples=n_samples)


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    window: tuple
    r_squared: float
    mode: str
    n_points: int
    warning: str = ""


FIT_FLOOR = 1e-14


def fit_exponent(
    times, values, window_fraction: float = 0.5, mode: str = "ensemble-mean"
) -> FitResult:
    """Least-squares slope of log(values) over the trailing fit window.

    Points at or below the double-precision floor (1e-14) or nonpositive are
    excluded with a warning; an empty or single-point window is an error.
    """
    if not 0.0 < window_fraction <= 1.0:
        raise ValueError("window_fraction must be in (0, 1]")
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    t_lo = times[-1] - window_fraction * (times[-1] - times[0])
    mask = times >= t_lo
    t_win = times[mask]
    v_win = values[mask]
    good = v_win > FIT_FLOOR
    warning = ""
    if not np.all(good):
        warning = f"excluded {int(np.sum(~good))} points at/below the 1e-14 floor"
        warnings.warn(warning)
        t_win, v_win = t_win[good], v_win[good]
    if t_win.size < 2:
        raise ValueError("fit window has fewer than two usable points")
    logv = np.log(v_win)
    slope, intercept = np.polyfit(t_win, logv, 1)
    pred = slope * t_win + intercept
    ss_res = float(np.sum((logv - pred) ** 2))
    ss_tot = float(np.sum((logv - np.mean(logv)) ** 2))
    # a constant series carries rounding-level ss_tot; report a perfect fit
    r2 = 1.0 if ss_tot <= 1e-20 else 1.0 - ss_res / ss_tot
    return FitResult(
        slope=float(slope),
        intercept=float(intercept),
        window=(float(t_win[0]), float(t_win[-1])),
        r_squared=r2,
        mode=mode,
        n_points=int(t_win.size),
        warning=warning,
    )


def per_sample_slopes(records, window_fraction: float = 0.5) -> np.ndarray:
    """Fitted slope of the coupled target distance for each trajectory."""
    slopes = []
    for rec in records:
        fit = fit_exponent(
            rec.times, rec.db_coupled_target, window_fraction, mode="per-sample"
        )
        slopes.append(fit.slope)
    return np.array(slopes)


@dataclass
class ProbeStatistics:
    """First-passage outcomes of a trajectory ensemble."""

    kind: str
    times: np.ndarray          # passage time, nan where never triggered
    t_end: float
    threshold: float
    report: object = None

    @property
    def n_traj(self) -> int:
        return self.times.size

    @property
    def fraction(self) -> float:
        return float(np.mean(np.isfinite(self.times)))

    def quantiles(self, qs=(0.5, 0.9, 0.99)) -> dict:
        finite = self.times[np.isfinite(self.times)]
        if finite.size == 0:
            return {q: math.nan for q in qs}
        return {q: float(np.quantile(finite, q)) for q in qs}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("trajectory_index,time,triggered\n")
            for i, t in enumerate(self.times):
                flag = 1 if np.isfinite(t) else 0
                fh.write(f"{i},{t:.17g},{flag}\n")

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "n_traj": self.n_traj,
            "fraction_triggered": self.fraction,
            "threshold": self.threshold,
            "t_end": self.t_end,
            "quantiles": {str(k): v for k, v in self.quantiles().items()},
        }


def _mix_toward(proj_pop_index, sigma, distance):
    """Convex mix of an eigenprojector with sigma at an exact pure-target distance."""
    n_dim = sigma.shape[0]
    pure = _projector(n_dim, proj_pop_index)
    p_target = (1.0 - 0.5 * distance**2) ** 2
    s_pop = float(np.real(sigma[proj_pop_index, proj_pop_index]))
    w = (1.0 - p_target) / (1.0 - s_pop)
    if not 0.0 <= w <= 1.0:
        raise ValueError("requested perturbation distance unreachable along this direction")
    return (1.0 - w) * pure + w * sigma


def _require_probe_eligibility(spec, basis, params, boundary_target: bool):
    report = check_parameter_conditions(basis.n_dim, params, spec.target)
    gate = "spurious-escape-boundary" if boundary_target else "spurious-escape-general"
    if not report[gate].ok:
        raise ConditionNotMetError(f"{gate} fails: {report[gate].text}", report)
    hyp = check_hypotheses(spec, basis)
    needed = ["h0-equilibrium-set", "h1-power-bound" if boundary_target else "h2-dead-zone"]
    for name in needed:
        if not hyp[name].ok:
            raise ConditionNotMetError(f"controller hypothesis {name} fails", hyp)
    return report, hyp


def exit_time_probe(
    basis: SpinBasis,
    params: SystemParams,
    spec: ControllerSpec,
    n_spurious: int,
    radius: float,
    config: IntegratorConfig,
    n_traj: int,
    start_distance: float = 0.05,
    seed: Optional[int] = None,
) -> ProbeStatistics:
    """First exit of the coupled distance ball around (e_n, e_nbar), n != nbar."""
    nbar = spec.target
    if n_spurious == nbar:
        raise ValueError("spurious center must differ from the target index")
    report, _ = _require_probe_eligibility(
        spec, basis, params, boundary_target=nbar in (0, basis.n_dim - 1)
    )
    seed = config.seed if seed is None else seed
    root = np.random.SeedSequence(entropy=seed, spawn_key=(987,))
    initials = []
    for child in root.spawn(n_traj):
        a, b = child.spawn(2)
        sigma_r = random_density(basis.n_dim, basis.n_dim, a)
        sigma_h = random_density(basis.n_dim, basis.n_dim, b)
        initials.append(
            CoupledState(
                rho=_mix_toward(n_spurious, sigma_r, 0.5 * start_distance),
                rho_hat=_mix_toward(nbar, sigma_h, 0.5 * start_distance),
            )
        )
    watch = engine.WatchSpec(
        kind="exit", n_true=n_spurious, n_filter=nbar, threshold=radius, stop=True
    )
    records, result = run_batch_records(
        initials, spec, params, basis, config, watch=watch, raise_on_blowup=False
    )
    _check_pre_trigger_blowups(result, config)
    steps = result.watch_step.astype(float)
    times = np.where(steps >= 0, steps * config.dt, np.nan)
    return ProbeStatistics(
        kind="exit", times=times, t_end=config.t_end, threshold=radius, report=report
    )


def _check_pre_trigger_blowups(result, config):
    """Blowups before (or without) a watch trigger are real failures."""
    from .integrator import SimulationBlowupError

    blown = result.blow_step >= 0
    pre = blown & ((result.watch_step < 0) | (result.blow_step < result.watch_step))
    if np.any(pre):
        lane = int(np.argmax(pre))
        raise SimulationBlowupError(
            "probe trajectory left the validity region before triggering; reduce dt",
            t=float(result.blow_step[lane]) * config.dt,
        )


def hitting_time_probe(
    basis: SpinBasis,
    params: SystemParams,
    spec: ControllerSpec,
    initial: CoupledState,
    epsilon: float,
    config: IntegratorConfig,
    n_traj: int,
) -> ProbeStatistics:
    """First entry of the coupled distance to the target pair below epsilon."""
    nbar = spec.target
    report, _ = _require_probe_eligibility(
        spec, basis, params, boundary_target=nbar in (0, basis.n_dim - 1)
    )
    watch = engine.WatchSpec(kind="hit", n_true=nbar, n_filter=nbar, threshold=epsilon, stop=True)
    initials = [initial] * n_traj
    records, result = run_batch_records(
        initials, spec, params, basis, config, watch=watch, raise_on_blowup=False
    )
    _check_pre_trigger_blowups(result, config)
    steps = result.watch_step.astype(float)
    times = np.where(steps >= 0, steps * config.dt, np.nan)
    return ProbeStatistics(
        kind="hit", times=times, t_end=config.t_end, threshold=epsilon, report=report
    )

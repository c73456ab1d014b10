"""Feedback laws and the analytic eligibility checks of the stabilization theory.

Two parametrized controller families drive the estimated state toward a
target eigenstate n_bar:

  boundary law   u = alpha * (1 - rho^_{nbar,nbar})**beta        (extreme targets)
  interior law   u = alpha * (J - nbar - <Jz>)**beta * f(1 - rho^_{nbar,nbar})

where f is a C^1 sine cutoff vanishing below eps1 and saturating above eps2.

The condition checkers evaluate, with explicit numeric margins, the
parameter-domain inequalities under which the coupled system is provably
stabilized, and the controller hypotheses:

  H0  u vanishes at the target eigenprojector and nowhere else among them
  H1  |u| <= c (1 - rho^_{nbar,nbar})**m with m > 1/2
  H2  u vanishes identically on a ball around the target
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .spin import SpinBasis, projector
from .states import (
    SystemParams,
    expect_jz,
    functionals,
    random_density,
    theta_n,
    variance_z,
)

__all__ = [
    "ControllerSpec",
    "ConditionRow",
    "ConditionReport",
    "ConditionNotMetError",
    "ExponentBounds",
    "smooth_cutoff",
    "signed_power",
    "evaluate_control",
    "check_hypotheses",
    "check_parameter_conditions",
    "exponent_bounds",
    "check_condition_u",
]

_ZERO_TOL = 1e-14


class ConditionNotMetError(ValueError):
    """A required parameter condition fails; carries the failing report."""

    def __init__(self, message: str, report: "ConditionReport"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class ControllerSpec:
    """Feedback controller configuration.

    variant: "zero", "boundary", "interior" or "user".
    target: index of the eigenstate to stabilize.
    """

    variant: str
    target: int
    alpha: float = 1.0
    beta: float = 1.0
    eps1: float = 0.1
    eps2: float = 0.3
    control_fn: Optional[Callable[[np.ndarray], float]] = field(default=None, repr=False)
    allow_unvalidated_beta: bool = False

    def __post_init__(self):
        if self.variant not in ("zero", "boundary", "interior", "user"):
            raise ValueError(f"unknown controller variant {self.variant!r}")
        if self.target < 0 or int(self.target) != self.target:
            raise ValueError(f"target index must be a nonnegative integer, got {self.target!r}")
        if self.variant in ("boundary", "interior"):
            if self.alpha <= 0:
                raise ValueError("alpha must be > 0")
            if self.beta < 1.0 and not (self.allow_unvalidated_beta and self.beta > 0.5):
                raise ValueError(
                    "beta must be >= 1 (beta in (1/2, 1) only with allow_unvalidated_beta=True)"
                )
        if self.variant == "interior" and not 0.0 < self.eps1 < self.eps2 < 1.0:
            raise ValueError("cutoff thresholds must satisfy 0 < eps1 < eps2 < 1")
        if self.variant == "user" and self.control_fn is None:
            raise ValueError("user variant requires control_fn")


def smooth_cutoff(x: float, eps1: float, eps2: float) -> float:
    """C^1 sine ramp: 0 on [0, eps1), 1 on (eps2, 1], smooth in between."""
    if not 0.0 < eps1 < eps2 < 1.0:
        raise ValueError("thresholds must satisfy 0 < eps1 < eps2 < 1")
    if x < 0.0 or x > 1.0:
        raise ValueError(f"cutoff argument {x} outside [0, 1]")
    if x < eps1:
        return 0.0
    if x > eps2:
        return 1.0
    return 0.5 * math.sin(math.pi * (2.0 * x - eps1 - eps2) / (2.0 * (eps2 - eps1))) + 0.5


def signed_power(x: float, beta: float) -> float:
    """x**beta for integer beta, sign(x)*|x|**beta otherwise."""
    if abs(beta - round(beta)) < 1e-12:
        return float(x ** int(round(beta)))
    return float(math.copysign(abs(x) ** beta, x)) if x != 0.0 else 0.0


def evaluate_control(spec: ControllerSpec, basis: SpinBasis, rho_hat: np.ndarray) -> float:
    """Scalar feedback value u(rho_hat)."""
    if spec.variant == "zero":
        return 0.0
    if spec.variant == "user":
        return float(spec.control_fn(rho_hat))
    pop = min(1.0, max(0.0, float(np.real(rho_hat[spec.target, spec.target]))))
    if spec.variant == "boundary":
        return spec.alpha * (1.0 - pop) ** spec.beta
    p = basis.j - spec.target - expect_jz(basis, rho_hat)
    return spec.alpha * signed_power(p, spec.beta) * smooth_cutoff(1.0 - pop, spec.eps1, spec.eps2)


@dataclass(frozen=True)
class ConditionRow:
    name: str
    text: str
    ok: bool
    margin: float
    applicable: bool = True
    conclusive: bool = True
    detail: str = ""

    def format(self) -> str:
        if not self.applicable:
            status = "N/A"
        elif self.ok and self.conclusive:
            status = "PASS"
        elif self.ok:
            status = "NOT FALSIFIED"
        else:
            status = "FAIL"
        line = f"{self.name}: {self.text} {status}"
        if self.detail:
            line += f"  [{self.detail}]"
        return line


@dataclass(frozen=True)
class ConditionReport:
    rows: tuple

    def __getitem__(self, name: str) -> ConditionRow:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows if r.applicable)

    def to_text(self) -> str:
        return "\n".join(r.format() for r in self.rows)

    def to_dict(self) -> dict:
        return {
            r.name: {
                "text": r.text,
                "ok": r.ok,
                "margin": r.margin,
                "applicable": r.applicable,
                "conclusive": r.conclusive,
                "detail": r.detail,
            }
            for r in self.rows
        }


def _fmt(x: float) -> str:
    return f"{x:.5f}".rstrip("0").rstrip(".") if x == x else "nan"


def _chain_row(name, values, applicable=True, detail="") -> ConditionRow:
    """Row asserting a strictly increasing chain v0 < v1 < ... < vk."""
    margins = [values[i + 1] - values[i] for i in range(len(values) - 1)]
    ok = all(m > 0 for m in margins)
    text = " < ".join(_fmt(v) for v in values)
    return ConditionRow(
        name=name, text=text, ok=ok, margin=min(margins), applicable=applicable, detail=detail
    )


def check_parameter_conditions(n_dim: int, params: SystemParams, nbar: int) -> ConditionReport:
    """Evaluate every parameter-domain inequality of the stabilization results."""
    if not 0 <= nbar <= n_dim - 1:
        raise ValueError(f"target index {nbar} out of range for N={n_dim}")
    n = n_dim
    j = (n - 1) / 2.0
    a = params.root_em          # sqrt(eta M)
    b = params.root_em_hat      # sqrt(eta^ M^)
    ratio = b / a
    boundary = nbar in (0, n - 1)

    rows = [
        _chain_row("spurious-escape-boundary", [(n - 3) * a, (n - 2) * b], applicable=boundary),
        _chain_row("spurious-escape-general", [(n - 3) * a, (n - 2) * b, (n - 1) * a]),
        ConditionRow(
            name="reachability-window",
            text=f"{_fmt((n - 1) * a)} > {_fmt((n - 3) * b)} and {_fmt((n - 1) * b)} > {_fmt((n - 3) * a)}",
            ok=(n - 1) * a > (n - 3) * b and (n - 1) * b > (n - 3) * a,
            margin=min((n - 1) * a - (n - 3) * b, (n - 1) * b - (n - 3) * a),
        ),
        _chain_row(
            "gain-window-narrow",
            [(2 * n - 2) / (2 * n - 1), ratio, 0.5 + 0.5 * math.sqrt((n + 1) / (n - 1))],
            applicable=boundary,
        ),
        _chain_row(
            "gain-window-wide",
            [(2 * n - 2) / (2 * n - 1), ratio, (2 * n - 2) / (2 * n - 3)],
            applicable=boundary,
        ),
    ]

    if not boundary:
        if nbar * 2 == n - 1:  # target at the middle eigenvalue, J - nbar = 0
            rows.append(
                _chain_row(
                    "interior-window", [(n - 3) * a, (n - 2) * b, (n - 1) * a], detail="central target"
                )
            )
        else:
            l_nbar = 4.0 * abs(j - nbar) * max(nbar, 2 * j - nbar)
            rows.append(
                _chain_row(
                    "interior-window",
                    [l_nbar / (l_nbar + 1.0) * a, b, l_nbar / (l_nbar - 1.0) * a],
                    detail=f"L={_fmt(l_nbar)}",
                )
            )
    else:
        rows.append(
            ConditionRow(
                name="interior-window", text="boundary target", ok=True, margin=math.inf, applicable=False
            )
        )
    return ConditionReport(rows=tuple(rows))


@dataclass(frozen=True)
class ExponentBounds:
    """Reference decay rates for a given target and eligibility rule.

    nu_s is the guaranteed sample (pathwise) exponent, nu_av the heuristic
    decay rate of the ensemble mean. For boundary targets, ``stated_bound``
    additionally records the stricter combination -K - (N-1) mismatch of
    the same constants; nu_s uses the consistent derivation -C - K/2.
    """

    nu_s: float
    nu_av: float
    rule: str
    constants: dict


def exponent_bounds(
    n_dim: int, params: SystemParams, nbar: int, rule: Optional[str] = None
) -> ExponentBounds:
    """Exponential-rate references for the stabilized coupled system.

    rule: "narrow" or "wide" (boundary targets), "interior"; default picks
    "narrow" for extreme targets and "interior" otherwise. Raises
    ConditionNotMetError when the corresponding parameter window fails.
    """
    n = n_dim
    j = (n - 1) / 2.0
    boundary = nbar in (0, n - 1)
    if rule is None:
        rule = "narrow" if boundary else "interior"
    if rule in ("narrow", "wide") and not boundary:
        raise ValueError(f"rule {rule!r} applies only to extreme targets")
    if rule == "interior" and boundary:
        raise ValueError("rule 'interior' applies only to interior targets")

    report = check_parameter_conditions(n_dim, params, nbar)
    gate = {"narrow": "gain-window-narrow", "wide": "gain-window-wide", "interior": "interior-window"}[
        rule
    ]
    if not report[gate].ok:
        raise ConditionNotMetError(
            f"parameter condition {gate} fails: {report[gate].text}", report
        )

    em = params.eta * params.M
    em_hat = params.eta_hat * params.M_hat
    k_bar = min(em, em_hat)
    mismatch = params.root_em_hat * abs(params.root_em - params.root_em_hat)

    constants = {"k_bar": k_bar, "mismatch": mismatch}
    if rule == "narrow":
        c_bar = 0.5 * k_bar - (n - 1) * mismatch
        nu_av = -c_bar
        nu_s = -c_bar - 0.5 * k_bar
        constants.update(c_bar=c_bar, stated_bound=-k_bar - (n - 1) * mismatch)
    elif rule == "wide":
        c_bar = min(0.5 * em, 0.5 * em_hat - (n - 1) * mismatch)
        nu_av = -c_bar
        nu_s = -c_bar - 0.5 * k_bar
        constants.update(c_bar=c_bar)
    else:
        l_nbar = 4.0 * abs(j - nbar) * max(nbar, 2 * j - nbar)
        c_nbar = min(0.5 * em, 0.5 * em_hat - 0.5 * l_nbar * mismatch)
        nu_av = -c_nbar
        nu_s = -c_nbar
        constants.update(l_nbar=l_nbar, c_nbar=c_nbar)
    return ExponentBounds(nu_s=nu_s, nu_av=nu_av, rule=rule, constants=constants)


def h2_radius(eps1: float) -> float:
    """Largest Bures radius on which the interior law provably vanishes."""
    return math.sqrt(2.0 - 2.0 * math.sqrt(1.0 - eps1))


def _shell_states(basis, nbar, gaps, per_shell, rng):
    """States with 1 - rho_{nbar,nbar} close to each requested gap."""
    for gap in gaps:
        for _ in range(per_shell):
            sigma = random_density(basis.n_dim, basis.n_dim, rng)
            s_pop = float(np.real(sigma[nbar, nbar]))
            # (1-w)*target + w*sigma has gap w*(1 - s_pop)
            w = min(1.0, gap / max(1e-12, 1.0 - s_pop))
            yield (1.0 - w) * projector(basis, nbar) + w * sigma, gap


def check_hypotheses(
    spec: ControllerSpec, basis: SpinBasis, sample_count: int = 10_000, seed: int = 0
) -> ConditionReport:
    """Check H0 exactly and H1/H2 analytically where the law permits, else by sampling."""
    nbar = spec.target
    if nbar >= basis.n_dim:
        raise ValueError(f"target {nbar} out of range for N={basis.n_dim}")
    u_at = [evaluate_control(spec, basis, projector(basis, m)) for m in range(basis.n_dim)]
    h0_ok = abs(u_at[nbar]) <= _ZERO_TOL and all(
        abs(u_at[m]) > _ZERO_TOL for m in range(basis.n_dim) if m != nbar
    )
    rows = [
        ConditionRow(
            name="h0-equilibrium-set",
            text=f"u(e_{nbar})={_fmt(u_at[nbar])}, min off-target |u|="
            f"{_fmt(min((abs(u_at[m]) for m in range(basis.n_dim) if m != nbar), default=0.0))}",
            ok=h0_ok,
            margin=0.0,
        )
    ]

    if spec.variant == "boundary":
        rows.append(
            ConditionRow(
                name="h1-power-bound",
                text=f"|u| = alpha*(1-pop)^beta with beta={_fmt(spec.beta)} > 1/2",
                ok=spec.beta > 0.5,
                margin=spec.beta - 0.5,
                detail="analytic",
            )
        )
        rows.append(
            ConditionRow(
                name="h2-dead-zone",
                text="u > 0 whenever pop < 1; no vanishing neighbourhood",
                ok=False,
                margin=-1.0,
                detail="analytic",
            )
        )
    elif spec.variant == "interior":
        c_bound = spec.alpha * (2.0 * basis.j) ** spec.beta / spec.eps1**spec.beta
        rows.append(
            ConditionRow(
                name="h1-power-bound",
                text=f"|u| <= {_fmt(c_bound)}*(1-pop)^{_fmt(spec.beta)} (cutoff zero below eps1)",
                ok=spec.beta > 0.5,
                margin=spec.beta - 0.5,
                detail="analytic",
            )
        )
        xi = h2_radius(spec.eps1)
        rows.append(
            ConditionRow(
                name="h2-dead-zone",
                text=f"u = 0 on Bures ball of radius {_fmt(xi)}",
                ok=True,
                margin=xi,
                detail="analytic",
            )
        )
    elif spec.variant == "zero":
        rows.append(
            ConditionRow(
                name="h1-power-bound", text="u = 0", ok=True, margin=math.inf, detail="analytic"
            )
        )
        rows.append(
            ConditionRow(
                name="h2-dead-zone", text="u = 0 everywhere", ok=True, margin=math.inf, detail="analytic"
            )
        )
    else:
        rows.extend(_sampled_h1_h2(spec, basis, sample_count, seed))
    return ConditionReport(rows=tuple(rows))


def _sampled_h1_h2(spec, basis, sample_count, seed):
    """Shell-sampled decay-order estimate for H1 and dead-zone probe for H2."""
    rng = np.random.default_rng(seed)
    gaps = np.geomspace(1e-6, 0.2, 12)
    per_shell = max(1, sample_count // len(gaps))
    worst = np.zeros(len(gaps))
    gap_of = {g: i for i, g in enumerate(gaps)}
    for rho_hat, gap in _shell_states(basis, spec.target, gaps, per_shell, rng):
        worst[gap_of[gap]] = max(worst[gap_of[gap]], abs(evaluate_control(spec, basis, rho_hat)))
    if np.all(worst <= _ZERO_TOL):
        h1 = ConditionRow(
            name="h1-power-bound",
            text="u vanished on all sampled shells",
            ok=True,
            margin=math.inf,
            conclusive=False,
            detail=f"sampled, {sample_count} states",
        )
        h2 = ConditionRow(
            name="h2-dead-zone",
            text=f"u = 0 up to gap {_fmt(float(gaps[-1]))}",
            ok=True,
            margin=float(gaps[-1]),
            conclusive=False,
            detail=f"sampled, {sample_count} states",
        )
        return [h1, h2]
    mask = worst > _ZERO_TOL
    slope = float(np.polyfit(np.log(gaps[mask]), np.log(worst[mask]), 1)[0]) if mask.sum() > 1 else 0.0
    h1 = ConditionRow(
        name="h1-power-bound",
        text=f"estimated decay order {_fmt(slope)} vs required > 0.5",
        ok=slope > 0.5,
        margin=slope - 0.5,
        conclusive=False,
        detail=f"sampled, {sample_count} states",
    )
    zero_below = 0.0
    for g, w in zip(gaps, worst):
        if w <= _ZERO_TOL:
            zero_below = g
        else:
            break
    h2 = ConditionRow(
        name="h2-dead-zone",
        text=f"largest sampled dead zone gap {_fmt(float(zero_below))}",
        ok=zero_below > 0.0,
        margin=float(zero_below),
        conclusive=False,
        detail=f"sampled, {sample_count} states",
    )
    return [h1, h2]


def check_condition_u(
    spec: ControllerSpec,
    basis: SpinBasis,
    params: SystemParams,
    nbar: int,
    sample_count: int = 10_000,
    seed: int = 0,
) -> ConditionReport:
    """Check 2 eta^ M^ Var_z(rho^) rho^_{nbar,nbar} > u(rho^) Theta_nbar(rho^) on the slice <Jz> = J - nbar."""
    if not 1 <= nbar <= basis.n_dim - 2:
        raise ValueError("condition applies to interior targets only")
    if spec.variant in ("zero", "interior"):
        # u * P-factor vanishes identically on the slice; left side > 0 off the target.
        why = "u = 0 on the slice" if spec.variant == "interior" else "u = 0 everywhere"
        row = ConditionRow(
            name="slice-dominance",
            text=f"right side vanishes ({why})",
            ok=True,
            margin=math.inf,
            detail="analytic",
        )
        return ConditionReport(rows=(row,))

    rng_root = np.random.SeedSequence(seed)
    worst = math.inf
    em_hat = params.eta_hat * params.M_hat
    for child in rng_root.spawn(sample_count):
        rho_hat = random_density(basis.n_dim, basis.n_dim, child)
        p = functionals(basis, rho_hat, nbar).p
        if abs(p) > 1e-13:
            m = 0 if p > 0 else basis.n_dim - 1
            lam = p / (p - (m - nbar))
            rho_hat = (1.0 - lam) * rho_hat + lam * projector(basis, m)
        left = 2.0 * em_hat * variance_z(basis, rho_hat) * float(np.real(rho_hat[nbar, nbar]))
        right = evaluate_control(spec, basis, rho_hat) * theta_n(basis, rho_hat, nbar)
        worst = min(worst, left - right)
    row = ConditionRow(
        name="slice-dominance",
        text=f"worst margin {_fmt(worst)}",
        ok=worst > 0.0,
        margin=worst,
        conclusive=False,
        detail=f"sampled, {sample_count} slice states",
    )
    return ConditionReport(rows=(row,))

"""Engine selection: compiled stepping kernel with a pure-numpy fallback.

The compiled Cython kernel (spinfilter._kernel) and the batched numpy kernel
(spinfilter._pykernel) implement the same stepping scheme; whichever is
available is picked at import, overridable with SPINFILTER_ENGINE=python or
=compiled, or per call. Controllers with user-supplied callables and PSD
projection always run on the python engine.
"""

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _pykernel
from .feedback import ControllerSpec
from .spin import SpinBasis
from .states import SystemParams

try:
    from . import _kernel  # compiled extension, built by setup.py

    HAVE_COMPILED = True
except ImportError:
    _kernel = None
    HAVE_COMPILED = False

__all__ = [
    "HAVE_COMPILED",
    "DEFAULT_ENGINE",
    "BatchResult",
    "WatchSpec",
    "available_engines",
    "run_batch",
]


def _default_engine() -> str:
    forced = os.environ.get("SPINFILTER_ENGINE", "").strip().lower()
    if forced in ("python", "compiled"):
        if forced == "compiled" and not HAVE_COMPILED:
            raise ImportError("SPINFILTER_ENGINE=compiled but the extension is not built")
        return forced
    return "compiled" if HAVE_COMPILED else "python"


DEFAULT_ENGINE = _default_engine()


def available_engines():
    return ("compiled", "python") if HAVE_COMPILED else ("python",)


@dataclass(frozen=True)
class WatchSpec:
    """First-passage monitor on the coupled distance to a pure-state pair."""

    kind: str  # "exit" or "hit"
    n_true: int
    n_filter: int
    threshold: float
    stop: bool = True

    def as_vec(self):
        code = {"exit": 1, "hit": 2}[self.kind]
        return np.array(
            [code, self.n_true, self.n_filter, self.threshold, 1.0 if self.stop else 0.0]
        )


@dataclass
class BatchResult:
    """Raw kernel output for a batch of trajectories."""

    snaps_rho: np.ndarray
    snaps_rhohat: np.ndarray
    u_rec: np.ndarray
    y_rec: np.ndarray
    watch_step: np.ndarray
    blow_step: np.ndarray
    max_trace_defect_pre: np.ndarray
    max_trace_defect_post: np.ndarray
    max_herm_defect: np.ndarray
    min_eig: np.ndarray
    engine: str


_CTRL_CODES = {"zero": 0, "boundary": 1, "interior": 2, "user": 0}


def _controller_vec(spec: ControllerSpec):
    return np.array(
        [
            _CTRL_CODES[spec.variant],
            spec.alpha,
            spec.beta,
            spec.target,
            spec.eps1,
            spec.eps2,
        ]
    )


def _params_vec(params: SystemParams):
    return np.array(
        [params.omega, params.eta, params.M, params.omega_hat, params.eta_hat, params.M_hat]
    )


def run_batch(
    basis: SpinBasis,
    params: SystemParams,
    spec: ControllerSpec,
    rho0: np.ndarray,
    rhohat0: np.ndarray,
    dw: np.ndarray,
    dt: float,
    record_stride: int,
    mode: str = "shared-wiener",
    renormalize: bool = True,
    watch: Optional[WatchSpec] = None,
    psd_projection: bool = False,
    engine: Optional[str] = None,
) -> BatchResult:
    """Run a batch of coupled trajectories on the selected engine."""
    mode_code = {"shared-wiener": 0, "observation-driven": 1}[mode]
    watch_vec = watch.as_vec() if watch is not None else np.zeros(5)
    name = engine or DEFAULT_ENGINE
    needs_python = spec.variant == "user" or psd_projection
    if needs_python:
        name = "python"
    if name == "compiled" and not HAVE_COMPILED:
        raise ValueError("compiled engine requested but not available")

    rho0 = np.ascontiguousarray(rho0, dtype=complex)
    rhohat0 = np.ascontiguousarray(rhohat0, dtype=complex)
    dw = np.ascontiguousarray(dw, dtype=float)
    z = np.ascontiguousarray(basis.z, dtype=float)
    c = np.ascontiguousarray(basis.c, dtype=float)

    if name == "python":
        control_fn = None
        if spec.variant == "user":
            fn = spec.control_fn

            def control_fn(batch):
                return np.array([fn(m) for m in batch])

        raw = _pykernel.run_batch(
            rho0,
            rhohat0,
            dw,
            z,
            c,
            _params_vec(params),
            _controller_vec(spec),
            float(dt),
            int(record_stride),
            mode_code,
            bool(renormalize),
            watch_vec,
            control_fn=control_fn,
            psd_projection=psd_projection,
        )
    else:
        raw = _kernel.run_batch(
            rho0,
            rhohat0,
            dw,
            z,
            c,
            _params_vec(params),
            _controller_vec(spec),
            float(dt),
            int(record_stride),
            mode_code,
            bool(renormalize),
            watch_vec,
        )
    return BatchResult(engine=name, **raw)

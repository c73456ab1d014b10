"""Pure-numpy Euler-Maruyama kernel, vectorized over a batch of trajectories.

This is the fallback engine (and the reference implementation the compiled
kernel mirrors). All trajectories in a batch advance in lockstep; lanes are
independent, so results per trajectory do not depend on batch composition.

Controller codes: 0 zero, 1 boundary law, 2 interior law.
Driving modes:    0 shared Wiener increments, 1 observation-driven filter.
Watch codes:      0 none, 1 exit (distance > threshold), 2 hit (< threshold).
"""

import numpy as np

COMPILED = False

_CTRL_ZERO, _CTRL_BOUNDARY, _CTRL_INTERIOR = 0, 1, 2
_WATCH_NONE, _WATCH_EXIT, _WATCH_HIT = 0, 1, 2

_HARD_TRACE = 0.1
_HARD_EIG = -0.1


def _min_eig_herm3(rho):
    """Smallest eigenvalue of a batch of 3x3 Hermitian matrices (closed form)."""
    d0 = rho[:, 0, 0].real
    d1 = rho[:, 1, 1].real
    d2 = rho[:, 2, 2].real
    a = rho[:, 0, 1]
    b = rho[:, 0, 2]
    c = rho[:, 1, 2]
    q = (d0 + d1 + d2) / 3.0
    e0 = d0 - q
    e1 = d1 - q
    e2 = d2 - q
    aa = np.abs(a) ** 2
    bb = np.abs(b) ** 2
    cc = np.abs(c) ** 2
    p2 = (e0 * e0 + e1 * e1 + e2 * e2) / 6.0 + (aa + bb + cc) / 3.0
    p = np.sqrt(p2)
    det = e0 * e1 * e2 - e0 * cc - e2 * aa - e1 * bb + 2.0 * np.real(a * c * np.conj(b))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(p > 0.0, det / (2.0 * p2 * np.where(p > 0.0, p, 1.0)), 0.0)
    r = np.clip(r, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    return q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)


def _cutoff(x, eps1, eps2):
    mid = 0.5 * np.sin(np.pi * (2.0 * x - eps1 - eps2) / (2.0 * (eps2 - eps1))) + 0.5
    return np.where(x < eps1, 0.0, np.where(x > eps2, 1.0, mid))


def _control(code, alpha, beta, nbar, eps1, eps2, j, rhohat, t_hat, control_fn):
    if control_fn is not None:
        return np.asarray(control_fn(rhohat), dtype=float)
    if code == _CTRL_ZERO:
        return np.zeros(rhohat.shape[0])
    pop = np.clip(rhohat[:, nbar, nbar].real, 0.0, 1.0)
    if code == _CTRL_BOUNDARY:
        return alpha * (1.0 - pop) ** beta
    p = j - nbar - t_hat
    if abs(beta - round(beta)) < 1e-12:
        powp = p ** int(round(beta))
    else:
        powp = np.sign(p) * np.abs(p) ** beta
    return alpha * powp * _cutoff(np.clip(1.0 - pop, 0.0, 1.0), eps1, eps2)


def _pure_target_dist(pop):
    return np.sqrt(np.maximum(0.0, 2.0 - 2.0 * np.sqrt(np.clip(pop, 0.0, 1.0))))


def run_batch(
    rho0,
    rhohat0,
    dw,
    z,
    c,
    pvec,
    cvec,
    dt,
    stride,
    mode,
    renormalize,
    watch_vec,
    control_fn=None,
    psd_projection=False,
):
    """Advance a batch of coupled trajectories; record every ``stride`` steps.

    Returns a dict of arrays; see engine.BatchResult for the field meaning.
    """
    rho = np.array(rho0, dtype=complex)
    rhohat = np.array(rhohat0, dtype=complex)
    dw = np.asarray(dw, dtype=float)
    batch, n_steps = dw.shape
    n_dim = rho.shape[1]
    if n_steps % stride != 0:
        raise ValueError("record stride must divide the number of steps")
    n_rec = n_steps // stride + 1

    omega, eta, em_m, omega_hat, eta_hat, em_m_hat = [float(v) for v in pvec]
    sq = np.sqrt(eta * em_m)
    sq_hat = np.sqrt(eta_hat * em_m_hat)
    code, alpha, beta, nbar, eps1, eps2 = (
        int(cvec[0]),
        float(cvec[1]),
        float(cvec[2]),
        int(cvec[3]),
        float(cvec[4]),
        float(cvec[5]),
    )
    w_code, w_true, w_filt, w_thr, w_stop = (
        int(watch_vec[0]),
        int(watch_vec[1]),
        int(watch_vec[2]),
        float(watch_vec[3]),
        bool(watch_vec[4]),
    )
    j = (n_dim - 1) / 2.0

    zcol = z[:, None]
    zrow = z[None, :]
    dz = zcol - zrow
    lind = -0.5 * dz**2  # times M below
    gplus = zcol + zrow
    jy = np.zeros((n_dim, n_dim), dtype=complex)
    idx = np.arange(n_dim - 1)
    jy[idx, idx + 1] = -1j * c
    jy[idx + 1, idx] = 1j * c

    snaps_rho = np.empty((batch, n_rec, n_dim, n_dim), dtype=complex)
    snaps_rhohat = np.empty_like(snaps_rho)
    u_rec = np.empty((batch, n_rec))
    y_rec = np.empty((batch, n_rec))
    watch_step = np.full(batch, -1, dtype=np.int64)
    blow_step = np.full(batch, -1, dtype=np.int64)
    max_tr_pre = np.zeros(batch)
    max_tr_post = np.zeros(batch)
    max_herm = np.zeros(batch)
    min_eig = np.full(batch, np.inf)
    y_cum = np.zeros(batch)

    track_eig = n_dim == 3

    def hygiene(state, t_label):
        herm = np.max(np.abs(state - state.conj().transpose(0, 2, 1)), axis=(1, 2))
        np.maximum(max_herm, herm, out=max_herm)
        tr = np.einsum("bnn->b", state).real
        defect = np.abs(tr - 1.0)
        np.maximum(max_tr_pre, defect, out=max_tr_pre)
        if renormalize:
            state = 0.5 * (state + state.conj().transpose(0, 2, 1))
            state = state / tr[:, None, None]
            if psd_projection:
                w, v = np.linalg.eigh(state)
                w = np.clip(w, 0.0, None)
                w /= np.sum(w, axis=1)[:, None]
                state = np.einsum("bij,bj,bkj->bik", v, w, v.conj())
            post = np.abs(np.einsum("bnn->b", state).real - 1.0)
        else:
            post = defect
        np.maximum(max_tr_post, post, out=max_tr_post)
        if track_eig:
            worst = _min_eig_herm3(state)
            np.minimum(min_eig, worst, out=min_eig)
        else:
            worst = np.min(np.einsum("bnn->bn", state).real, axis=1)
        blown = ~(defect <= _HARD_TRACE) | (worst < _HARD_EIG)
        new = blown & (blow_step < 0)
        blow_step[new] = t_label
        return state

    def watch_dist():
        return _pure_target_dist(rho[:, w_true, w_true].real) + _pure_target_dist(
            rhohat[:, w_filt, w_filt].real
        )

    def check_watch(step_label):
        if w_code == _WATCH_NONE:
            return
        s = watch_dist()
        cond = s > w_thr if w_code == _WATCH_EXIT else s < w_thr
        new = cond & (watch_step < 0)
        watch_step[new] = step_label

    check_watch(0)
    rec = 0
    for step in range(n_steps + 1):
        t_true = np.einsum("n,bnn->b", z, rho).real
        t_hat = np.einsum("n,bnn->b", z, rhohat).real
        u = _control(code, alpha, beta, nbar, eps1, eps2, j, rhohat, t_hat, control_fn)
        if step % stride == 0:
            snaps_rho[:, rec] = rho
            snaps_rhohat[:, rec] = rhohat
            u_rec[:, rec] = u
            y_rec[:, rec] = y_cum
            rec += 1
        if step == n_steps:
            break
        if w_code != _WATCH_NONE and w_stop and np.all(watch_step >= 0):
            # every lane has triggered; freeze remaining records at the current state
            for r2 in range(rec, n_rec):
                snaps_rho[:, r2] = rho
                snaps_rhohat[:, r2] = rhohat
                u_rec[:, r2] = u
                y_rec[:, r2] = y_cum
            rec = n_rec
            break

        dwk = dw[:, step]
        ub = u[:, None, None]
        comm_r = np.matmul(jy, rho) - np.matmul(rho, jy)
        comm_h = np.matmul(jy, rhohat) - np.matmul(rhohat, jy)
        drift_r = (-1j * omega * dz + em_m * lind) * rho - 1j * ub * comm_r
        drift_h = (-1j * omega_hat * dz + em_m_hat * lind) * rhohat - 1j * ub * comm_h
        g_r = sq * (gplus - 2.0 * t_true[:, None, None]) * rho
        g_h = sq_hat * (gplus - 2.0 * t_hat[:, None, None]) * rhohat

        dy = dwk + 2.0 * sq * t_true * dt
        if mode == 0:
            gap = sq * t_true - sq_hat * t_hat
            rho = rho + drift_r * dt + g_r * dwk[:, None, None]
            rhohat = (
                rhohat
                + drift_h * dt
                + g_h * dwk[:, None, None]
                + 2.0 * gap[:, None, None] * g_h * dt
            )
        else:
            innov_r = dy - 2.0 * sq * t_true * dt
            innov_h = dy - 2.0 * sq_hat * t_hat * dt
            rho = rho + drift_r * dt + g_r * innov_r[:, None, None]
            rhohat = rhohat + drift_h * dt + g_h * innov_h[:, None, None]
        y_cum = y_cum + dy

        rho = hygiene(rho, step + 1)
        rhohat = hygiene(rhohat, step + 1)
        check_watch(step + 1)

    return {
        "snaps_rho": snaps_rho,
        "snaps_rhohat": snaps_rhohat,
        "u_rec": u_rec,
        "y_rec": y_rec,
        "watch_step": watch_step,
        "blow_step": blow_step,
        "max_trace_defect_pre": max_tr_pre,
        "max_trace_defect_post": max_tr_post,
        "max_herm_defect": max_herm,
        "min_eig": min_eig,
    }

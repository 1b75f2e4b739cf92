"""Threshold orbits W+-, the Lyapunov-Perron solver and classification runs.

Near the discrete ground state write u = W + v. In field form the perturbation
obeys v_t = JL v + R(v) with (JL v)_1 = B^-1 A1 v_2, (JL v)_2 = -B^-1 A5 v_1 and
R(v) = i (m6/B) (|W+v|^4 (W+v) - W^5 - 5 W^4 v_1 - i W^4 v_2).
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .evolution import EvolveControls, Integrator, evolve, make_state

VERDICTS = ("stationary-manifold", "converges-to-W", "disperses", "blows-up", "undecided")


class ContractionFailure(RuntimeError):
    def __init__(self, msg, lipschitz=np.nan):
        super().__init__(msg)
        self.lipschitz = lipschitz


def remainder(model, v):
    """R(v) as a field (divided by the lumped mass)."""
    W = model.phi_h
    z = W + v
    W4 = W ** 4
    nl = np.abs(z) ** 4 * z - W4 * W - 5 * W4 * v.real - 1j * W4 * v.imag
    return 1j * (model.m6 / model.mass) * nl


def _exp_weights(e0, h):
    """Weights (w_near, w_far) of int_0^h e^{-e0 s} R(s) ds for R linear on [0, h]."""
    a = e0 * h
    E = np.exp(-a)
    far = (1 - E * (1 + a)) / (e0 * e0 * h)
    return (1 - E) / e0 - far, far


class CenterFlow:
    """Backward Crank-Nicolson for w_t = JL w + f on the center space."""

    def __init__(self, trich, h):
        m = trich.model
        B = sp.diags(m.mass)
        K = sp.bmat([[None, trich.A1], [-trich.A5, None]]).tocsr()
        BB = sp.block_diag([B, B]).tocsr()
        self.lu = splu((BB / h + 0.5 * K).tocsc())
        self.rhs = (BB / h - 0.5 * K).tocsr()
        self.B2 = np.r_[m.mass, m.mass]
        self.n = m.grid.n
        self.trich = trich

    def solve_back(self, f):
        """w on the time grid with w(T) = 0, given sources f[j] (complex fields)."""
        T = f.shape[0]
        n = self.n
        w = np.zeros_like(f)
        z = np.zeros(2 * n)
        for j in range(T - 2, -1, -1):
            src = 0.5 * (f[j] + f[j + 1])
            b = self.rhs @ z - self.B2 * np.r_[src.real, src.imag]
            z = self.lu.solve(b)
            c = self.trich.center(z[:n] + 1j * z[n:])
            z = np.r_[c.real, c.imag]
            w[j] = c
        return w


@dataclass
class LPState:
    t: np.ndarray
    y_minus: np.ndarray
    y_plus: np.ndarray
    v_c: np.ndarray = field(repr=False)
    y0_minus: float = 0.0
    lam: float = 0.0
    iterations: int = 0
    diffs: list = field(default_factory=list)
    converged: bool = False
    trich: object = field(default=None, repr=False)

    def v(self, j):
        tr = self.trich
        return self.y_minus[j] * tr.vm + self.y_plus[j] * tr.vp + self.v_c[j]

    @property
    def v0(self):
        return self.v(0)

    @property
    def y0_plus(self):
        return float(self.y_plus[0])

    @property
    def vc0_norm(self):
        return float(np.sqrt(max(self.trich.model.kinetic(self.v_c[0]), 0.0)))

    @property
    def contraction(self):
        """Successive difference ratios, ignoring iterations at the round-off floor."""
        d = np.asarray(self.diffs)
        if d.size < 2:
            return np.array([])
        keep = d[1:] > 1e3 * d.min()
        return (d[1:] / d[:-1])[keep]

    @property
    def max_contraction(self):
        c = self.contraction
        return float(c.max()) if c.size else 0.0


def lp_solve(y0_minus, trich, lam=None, horizon=None, dt=0.005, tol=1e-14, floor_tol=1e-8,
             max_iter=60, richardson=True):
    """Picard iteration of the Duhamel system for the stable-manifold orbit.

    y-(t) = e^{-e0 t} y0 + int_0^t e^{-e0 (t-s)} R-(s) ds
    y+(t) = -int_t^T e^{e0 (t-s)} R+(s) ds
    vc(t) = -int_t^T e^{(t-s) JL} Rc(s) ds
    truncated at T = horizon (default 12/e0). Successive differences are
    measured in sup_t e^{lam t}(|y-| + |y+| + ||vc||_a).

    Both time discretizations are second order, so by default the solve is
    repeated at dt/2 and the two are Richardson-combined on the coarse grid.
    """
    e0 = trich.e0
    lam = e0 if lam is None else lam
    if not 0 < lam <= e0 * (1 + 1e-12):
        raise ValueError("lam must lie in (0, e0]")
    T = 12.0 / e0 if horizon is None else horizon
    args = (y0_minus, trich, lam, T, tol, floor_tol, max_iter)
    N = int(np.ceil(T / dt))
    coarse = _picard(*args, N)
    if not richardson or y0_minus == 0:
        return coarse
    fine = _picard(*args, 2 * N)
    coarse.y_minus = (4 * fine.y_minus[::2] - coarse.y_minus) / 3
    coarse.y_plus = (4 * fine.y_plus[::2] - coarse.y_plus) / 3
    coarse.v_c = (4 * fine.v_c[::2] - coarse.v_c) / 3
    coarse.diffs = fine.diffs
    coarse.iterations += fine.iterations
    return coarse


def _picard(y0_minus, trich, lam, T, tol, floor_tol, max_iter, N):
    e0 = trich.e0
    t = np.linspace(0.0, T, N + 1)
    h = t[1] - t[0]
    m = trich.model
    n = m.grid.n
    wn, wf = _exp_weights(e0, h)
    decay = np.exp(-e0 * h)
    flow = CenterFlow(trich, h)
    ym = y0_minus * np.exp(-e0 * t)
    yp = np.zeros_like(t)
    vc = np.zeros((N + 1, n), dtype=complex)
    state = LPState(t=t, y_minus=ym, y_plus=yp, v_c=vc, y0_minus=y0_minus, lam=lam, trich=trich)
    if y0_minus == 0:
        state.converged = True
        return state
    weight = np.exp(lam * t)

    def anorm(f):
        return np.sqrt(np.maximum(np.einsum("ij,ij->i", np.conj(f), (m.A0 @ f.T).T).real, 0.0))

    last = None
    for it in range(max_iter):
        v = ym[:, None] * trich.vm[None, :] + yp[:, None] * trich.vp[None, :] + vc
        R = np.array([remainder(m, v[j]) for j in range(N + 1)])
        Rm = np.array([trich.y_minus(Rj) for Rj in R])
        Rp = np.array([trich.y_plus(Rj) for Rj in R])
        Rc = R - Rp[:, None] * trich.vp[None, :] - Rm[:, None] * trich.vm[None, :]
        ym_new = np.empty_like(ym)
        ym_new[0] = y0_minus
        for j in range(N):
            ym_new[j + 1] = decay * ym_new[j] + wf * Rm[j] + wn * Rm[j + 1]
        yp_new = np.empty_like(yp)
        yp_new[-1] = 0.0
        for j in range(N - 1, -1, -1):
            yp_new[j] = decay * yp_new[j + 1] - (wn * Rp[j] + wf * Rp[j + 1])
        # the terminal-value solve already equals -int_t^T e^{(t-s)JL} Rc ds
        vc_new = flow.solve_back(Rc)
        diff = np.max(weight * (np.abs(ym_new - ym) + np.abs(yp_new - yp) + anorm(vc_new - vc)))
        ym, yp, vc = ym_new, yp_new, vc_new
        state.diffs.append(diff)
        if not np.isfinite(diff):
            raise ContractionFailure("Lyapunov-Perron iteration produced non-finite values")
        floor = diff <= floor_tol * abs(y0_minus)
        if last is not None and it >= 2 and diff > 0.5 * last:
            if floor:
                # stagnation at round-off
                state.converged = True
                break
            if diff > last:
                raise ContractionFailure(f"iteration is not contracting (factor {diff / last:.3g})",
                                         lipschitz=diff / last)
        last = diff
        if diff <= tol * abs(y0_minus):
            state.converged = True
            break
    state.y_minus, state.y_plus, state.v_c = ym, yp, vc
    state.iterations = it + 1
    if not state.converged:
        raise ContractionFailure("Lyapunov-Perron iteration did not converge in max_iter",
                                 lipschitz=state.max_contraction)
    return state


def branch_sign(trich, y0, **kw):
    """Sign of ||W + v(0)||_a^2 - M for the stable-manifold datum with seed y0."""
    st = lp_solve(y0, trich, **kw)
    m = trich.model
    return np.sign(m.kinetic(m.phi_h + st.v0) - m.M), st


def threshold_datum(trich, branch, eps, **kw):
    """W + v(0) on the requested side of the threshold (kinetic below M for 'minus')."""
    if branch not in ("plus", "minus"):
        raise ValueError("branch must be 'plus' or 'minus'")
    want = -1 if branch == "minus" else 1
    sg, st = branch_sign(trich, abs(eps), **kw)
    if sg != want:
        sg, st = branch_sign(trich, -abs(eps), **kw)
        if sg != want:
            raise RuntimeError("neither seed sign lands on the requested branch")
    return trich.model.phi_h + st.v0, st


def deviation_observer(model):
    W = model.phi_h

    def obs(state):
        dv = state.phi - W
        return {"dev": float(np.sqrt(max(model.kinetic(dv), 0.0)))}
    return obs


def build_threshold_orbit(trich, branch, eps, t_end=8.0, controls=None, observers=(), **kw):
    """Evolve the Lyapunov-Perron datum on the given branch; returns (record, lp_state)."""
    u0, st = threshold_datum(trich, branch, eps, **kw)
    m = trich.model
    ctl = controls or EvolveControls(dt_max=1e-3, sample_dt=0.05)
    rec = evolve(make_state(m, u0), t_end, ctl, observers=(deviation_observer(m),) + tuple(observers),
                 model=m)
    rec.meta.update(branch=branch, y0_minus=st.y0_minus)
    return rec, st


def fit_rate(t, d, lo=None, hi=None, trim=1.0):
    """Least-squares slope of log d over the samples with lo <= d <= hi.

    The first and last `trim` e-foldings inside the window are dropped.
    Returns dict(rate, r2, efoldings, t0, t1, npts); rate is signed.
    """
    t, d = np.asarray(t, float), np.asarray(d, float)
    ok = np.isfinite(d) & (d > 0)
    if lo is not None:
        ok &= d >= lo
    if hi is not None:
        ok &= d <= hi
    idx = np.flatnonzero(ok)
    if idx.size < 4:
        return {"rate": np.nan, "r2": 0.0, "efoldings": 0.0, "t0": np.nan, "t1": np.nan, "npts": int(idx.size)}
    # contiguous block with the most samples
    blocks = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
    idx = max(blocks, key=len)
    ld = np.log(d[idx])
    span = abs(ld[-1] - ld[0])
    if span > 2 * trim + 1:
        lo_l, hi_l = min(ld[0], ld[-1]) + trim, max(ld[0], ld[-1]) - trim
        keep = (ld >= lo_l) & (ld <= hi_l)
        idx, ld = idx[keep], ld[keep]
    if idx.size < 4:
        return {"rate": np.nan, "r2": 0.0, "efoldings": 0.0, "t0": np.nan, "t1": np.nan, "npts": int(idx.size)}
    tt = t[idx]
    A = np.vstack([tt, np.ones_like(tt)]).T
    coef, *_ = np.linalg.lstsq(A, ld, rcond=None)
    pred = A @ coef
    ss = np.sum((ld - ld.mean()) ** 2)
    r2 = 1 - np.sum((ld - pred) ** 2) / ss if ss > 0 else 0.0
    return {"rate": float(coef[0]), "r2": float(r2), "efoldings": float(abs(ld[-1] - ld[0])),
            "t0": float(tt[0]), "t1": float(tt[-1]), "npts": int(idx.size)}


def integral_virial_ratios(record, windows, mu=None):
    """C_w = int_a^b d dt / (sup lambda^-2 (d(a) + d(b))) for each window (a, b).

    lambda = 1/mu from the modulation columns when present, else 1.
    """
    t = record.array("t")
    d = record.array("d_u")
    muv = record.array("mu") if mu is None else np.full_like(t, mu)
    out = []
    for a, b in windows:
        sel = (t >= a - 1e-12) & (t <= b + 1e-12)
        ts, ds = t[sel], d[sel]
        if ts.size < 3:
            raise ValueError(f"window ({a}, {b}) has too few samples")
        integral = np.trapezoid(ds, ts)
        mw = muv[sel]
        lam2 = np.nanmax(mw ** 2) if np.any(np.isfinite(mw)) else 1.0
        out.append(integral / (lam2 * (ds[0] + ds[-1])))
    return np.array(out)


@dataclass
class ClassificationVerdict:
    label: str
    evidence: dict
    record: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.label not in VERDICTS:
            raise ValueError(f"unknown verdict {self.label!r}")


@dataclass
class ClassifyBudget:
    t_end: float = 10.0
    dt_max: float = 1e-3
    sample_dt: float = 0.05
    stationary_tol: float = 1e-5
    decay_r2: float = 0.99
    decay_efoldings: float = 3.0
    l6_drop: float = 0.8
    s_tail_frac: float = 0.01


def classify(model, u0, budget=None, controls=None):
    """Run forward and label the orbit from evidence only.

    stationary-manifold: d(u) <= stationary_tol * M at every sample.
    converges-to-W: log-linear decay of d with R^2 >= decay_r2 over >= decay_efoldings.
    blows-up: step collapse with conserved energy and growing concentration.
    disperses: run completes, L6 norm below l6_drop of its initial value over
    the whole last half (boundary reflections may make it wobble there), and
    scattering-size increments over the last quarter below s_tail_frac of the total.
    Anything else is undecided.
    """
    b = budget or ClassifyBudget()
    ctl = controls or EvolveControls(dt_max=b.dt_max, sample_dt=b.sample_dt)
    rec = evolve(make_state(model, u0), b.t_end, ctl, model=model)
    M = model.M
    t, d = rec.array("t"), rec.array("d_u")
    E = rec.array("E")
    L6, S, K = rec.array("L6"), rec.array("S_cum"), rec.array("kinetic")
    ev = {"status": rec.status, "reason": rec.reason, "t_final": float(t[-1]),
          "d_final": float(d[-1] / M), "d_max": float(d.max() / M), "kinetic_final": float(K[-1] / M),
          "energy_drift": float(np.max(np.abs(E - E[0]))), "S": float(S[-1]),
          "E_minus_EW": float((E[0] - M / 3) / M)}
    if rec.status == "blowup":
        linf = rec.array("Linf")
        ev["linf_growth"] = float(linf[-1] / linf[0])
        ok = ev["energy_drift"] <= 1e-6 * max(abs(E[0]), 1.0) and ev["linf_growth"] > 10
        return ClassificationVerdict("blows-up" if ok else "undecided", ev, rec)
    if rec.status != "completed":
        return ClassificationVerdict("undecided", ev, rec)
    if np.all(d <= b.stationary_tol * M):
        return ClassificationVerdict("stationary-manifold", ev, rec)
    fr = fit_rate(t, d, hi=1e-1 * M, lo=1e-9 * M)
    ev["decay_fit"] = fr
    if fr["rate"] < 0 and fr["r2"] >= b.decay_r2 and fr["efoldings"] >= b.decay_efoldings:
        return ClassificationVerdict("converges-to-W", ev, rec)
    half = t >= 0.5 * t[-1]
    quarter = t >= 0.75 * t[-1]
    l6_ok = np.max(L6[half]) <= b.l6_drop * L6[0]
    s_tail = (S[-1] - S[quarter][0]) / max(S[-1], 1e-300)
    ev.update(l6_ratio=float(L6[-1] / L6[0]), s_tail=float(s_tail))
    if l6_ok and s_tail <= b.s_tail_frac:
        return ClassificationVerdict("disperses", ev, rec)
    return ClassificationVerdict("undecided", ev, rec)


def smooth_cutoff(r, R0):
    """1 on [0, R0], 0 past 2 R0, C^2 quintic step in between."""
    x = np.clip((r - R0) / R0, 0, 1)
    return 1 - x ** 3 * (10 - 15 * x + 6 * x * x)


def tuned_blowup_datum(model, R0, tol=1e-12):
    """c W chi_R0 with E = E(W) and kinetic above M (larger root in c).

    E(c f) = c^2 K/2 - c^6 P/6 peaks at c*^4 = K/P; the root beyond the
    peak has c^2 K > M.
    """
    from scipy.optimize import brentq
    f = model.phi_h * smooth_cutoff(model.grid.r, R0)
    K, P = model.kinetic(f), model.sextic(f)
    target = model.M / 3
    cs = (K / P) ** 0.25
    g = lambda c: c * c * K / 2 - c ** 6 * P / 6 - target
    if g(cs) <= 0:
        raise ValueError("truncated profile cannot reach the threshold energy")
    hi = 2 * cs
    while g(hi) > 0:
        hi *= 2
    c = brentq(g, cs, hi, xtol=tol, rtol=1e-15)
    return c * f, c

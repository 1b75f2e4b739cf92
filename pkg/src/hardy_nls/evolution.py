"""Radial NLS flow i u_t = L_a u - |u|^4 u on the discrete model.

Two integrators share the same semi-discrete Hamiltonian system
i B phi_t = A0 phi - m6 |phi|^4 phi:

* "cn": Crank-Nicolson with the Delfour-Fortin-Payre average of the
  nonlinearity. Conserves the discrete mass and energy exactly (up to the
  fixed-point tolerance) and keeps the discrete ground state stationary.
* "strang": half nonlinear phase / exact linear propagator / half nonlinear
  phase, the linear flow taken from a cached eigendecomposition.
"""
from dataclasses import dataclass, field, replace
import csv
import io

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve_banded, cholesky_banded, eigh
from scipy.sparse.linalg import splu

from .grid import mass_diag, s_minus, s_plus

CSV_COLUMNS = ["t", "d_u", "kinetic", "E", "mass", "L6", "Linf", "S_cum",
               "theta", "mu", "alpha", "VR", "dtVR", "dttVR"]


def lp_weights(grid, params, p):
    """Weights w with sum w |phi|^p = int |u|^p dx (tail continued along r**s_minus)."""
    s, sm = s_plus(params), s_minus(params)
    w = mass_diag(grid, s, (p - 2) * s)
    if p * sm + 3 < 0:
        rh, _ = grid.at(grid.n + 0.5)
        rn = grid.r[-1]
        amp = rn ** s * (rh / rn) ** sm
        w[-1] += 4 * np.pi * rh ** 3 * amp ** p / (-p * sm - 3)
    return w


@dataclass
class SimState:
    t: float
    phi: np.ndarray
    dt: float
    E0: float
    M0: float
    S: float = 0.0
    direction: int = 1

    def copy(self):
        return replace(self, phi=self.phi.copy())


class PropagatorCache:
    """Eigendecomposition of B^-1 A0 for the exact linear flow exp(-i tau L_a).

    The stiff matrix is diagonalized through its shift-inverted symmetric form
    B^(1/2) (A0 + B)^(-1) B^(1/2), which resolves the low modes to round-off;
    the eigenbasis is B-orthonormal, so each application is unitary in the
    discrete L^2 norm whatever the accuracy of the stiffest eigenvalues.
    """

    def __init__(self, model):
        B = model.mass
        from .grid import _to_upper_banded
        A = model.A0 + sp.diags(B)
        cb = cholesky_banded(_to_upper_banded(A, 3), lower=False)
        sb = np.sqrt(B)
        S = sb[:, None] * cho_solve_banded((cb, False), np.diag(sb))
        tau, Q = eigh(0.5 * (S + S.T))
        self.lam = 1.0 / tau - 1.0
        self.Q = Q
        self.sb = sb

    def apply(self, phi, tau):
        c = self.Q.T @ (self.sb * phi)
        return (self.Q @ (np.exp(-1j * tau * self.lam) * c)) / self.sb


@dataclass
class EvolveControls:
    dt_max: float = 1e-3
    sample_dt: float = 0.05
    adaptive: bool = True
    dt_floor: float = 1e-10
    grad_factor: float = 1e3
    linf_factor: float = 30.0
    method: str = "cn"
    absorb: bool = False
    absorb_strength: float = 2.0
    absorb_start: float = 0.9
    fp_tol: float = 1e-13
    max_steps: int = 5_000_000
    keep_fields: bool = False


@dataclass
class OrbitRecord:
    columns: dict = field(default_factory=lambda: {c: [] for c in CSV_COLUMNS})
    fields: list = field(default_factory=list)
    status: str = "running"
    reason: str = ""
    final: SimState | None = None
    meta: dict = field(default_factory=dict)

    def append(self, row, phi=None):
        size = len(self)
        for c in CSV_COLUMNS:
            self.columns[c].append(row.get(c, np.nan))
        for c, v in row.items():
            if c not in self.columns:
                # extra observer columns are kept in memory but not written to CSV
                self.columns[c] = [np.nan] * size
            if c not in CSV_COLUMNS:
                self.columns[c].append(v)
        for c, col in self.columns.items():
            if len(col) < size + 1:
                col.append(np.nan)
        if phi is not None:
            self.fields.append(phi.copy())

    def array(self, name):
        return np.asarray(self.columns[name], dtype=float)

    def __len__(self):
        return len(self.columns["t"])

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i in range(len(self)):
            row = []
            for c in CSV_COLUMNS:
                v = self.columns[c][i]
                row.append("" if v is None or (isinstance(v, float) and np.isnan(v)) else repr(float(v)))
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


class Integrator:
    """Time stepper bound to a discrete model."""

    def __init__(self, model, controls=None):
        self.model = model
        self.c = controls or EvolveControls()
        self.B = model.mass
        self.nl = model.m6 / model.mass  # |u|^4 = nl |phi|^4
        self.w10 = lp_weights(model.grid, model.params, 10)
        self.r_pow = model.grid.r ** s_plus(model.params)
        self.gamma = np.zeros(model.grid.n)
        if self.c.absorb:
            r = model.grid.r
            r0 = self.c.absorb_start * r[-1]
            x = np.clip((r - r0) / (r[-1] - r0), 0, 1)
            self.gamma = self.c.absorb_strength * x ** 3 * (10 - 15 * x + 6 * x * x)
        self._lu = {}
        self._prop = None
        self.ref = model.phi_h.astype(complex)
        W = model.phi_h
        self.linf_W = float(np.max(np.abs(self.r_pow * W)))
        self.dt_scale = self.linf_W ** 4

    # linear algebra -------------------------------------------------------
    def _factor(self, dt):
        lu = self._lu.get(dt)
        if lu is None:
            if len(self._lu) > 8:
                self._lu.clear()
            Bd = sp.diags(self.B * (1j / dt + 0.5j * self.gamma))
            lu = splu((Bd - 0.5 * self.model.A0).tocsc().astype(complex))
            self._lu[dt] = lu
        return lu

    def propagator(self):
        if self._prop is None:
            self._prop = PropagatorCache(self.model)
        return self._prop

    # steppers ---------------------------------------------------------------
    def set_reference(self, phi):
        """Gauge-rotate W_h towards phi; the CN step works with phi - ref."""
        W = self.model.phi_h
        c = np.vdot(W, self.B * phi)
        self.ref = (c / abs(c) if abs(c) > 0 else 1.0) * W

    def step_cn(self, phi, dt):
        """One conservative Crank-Nicolson step; returns (phi_new, converged).

        The update is written for w = phi - ref with ref = e^{ic} W_h, using
        A0 ref = m6 |ref|^4 ref, so round-off scales with |w| rather than
        |phi| and the ground state is an exact fixed point.
        """
        A, B, m6 = self.model.A0, self.B, self.model.m6
        ref = self.ref
        lu = self._factor(dt)
        w = phi - ref
        rhs0 = B * (1j / dt - 0.5j * self.gamma) * w + 0.5 * (A @ w)
        if self.c.absorb:
            rhs0 -= 1j * B * self.gamma * ref
        r2 = np.abs(ref) ** 2
        da = 2 * np.real(np.conj(ref) * w) + np.abs(w) ** 2
        a2 = r2 + da
        wn = w.copy()
        prev = np.inf
        for _ in range(60):
            db = 2 * np.real(np.conj(ref) * wn) + np.abs(wn) ** 2
            b2 = r2 + db
            # DFP average minus its value at (ref, ref)
            dP = da * (a2 + r2) + da * b2 + r2 * db + db * (b2 + r2)
            dG = m6 / 6 * (dP * (2 * ref + w + wn) + 3 * r2 * r2 * (w + wn))
            nxt = lu.solve(rhs0 - dG)
            err = np.max(np.abs(nxt - wn))
            wn = nxt
            scale = max(1.0, np.max(np.abs(ref + wn)))
            if err <= self.c.fp_tol * scale:
                return ref + wn, True
            # stalled at the round-off floor: more sweeps cannot help
            if err >= 0.5 * prev and err <= 1e3 * self.c.fp_tol * scale:
                return ref + wn, True
            prev = err
        return ref + wn, False

    def step_strang(self, phi, dt):
        ph = np.exp(0.5j * dt * self.nl * np.abs(phi) ** 4)
        phi = ph * phi
        phi = self.propagator().apply(phi, dt)
        if self.c.absorb:
            phi = phi * np.exp(-dt * self.gamma)
        phi = np.exp(0.5j * dt * self.nl * np.abs(phi) ** 4) * phi
        return phi, bool(np.all(np.isfinite(phi)))

    def step(self, phi, dt):
        if self.c.method == "cn":
            return self.step_cn(phi, dt)
        if self.c.method == "strang":
            return self.step_strang(phi, dt)
        raise ValueError(f"unknown method {self.c.method!r}")

    # diagnostics -------------------------------------------------------------
    def linf(self, phi):
        return float(np.max(np.abs(self.r_pow * phi)))

    def l10(self, phi):
        return float(np.sum(self.w10 * np.abs(phi) ** 10))

    def choose_dt(self, phi):
        if not self.c.adaptive:
            return self.c.dt_max
        u4 = self.linf(phi) ** 4
        return min(self.c.dt_max, self.c.dt_max * self.dt_scale / max(u4, 1e-300))


def make_state(model, phi, t=0.0, dt=1e-3):
    phi = np.asarray(phi, dtype=complex)
    return SimState(t=t, phi=phi.copy(), dt=dt, E0=model.energy(phi), M0=model.l2(phi))


def step(state, dt, integ):
    """Advance one step of size dt; non-finite output is flagged, not raised."""
    new, ok = integ.step(state.phi, dt)
    out = state.copy()
    if not np.all(np.isfinite(new)):
        out.phi = state.phi
        return out, False
    l10a, l10b = integ.l10(state.phi), integ.l10(new)
    out.phi = new
    out.t = state.t + state.direction * dt
    out.dt = dt
    out.S = state.S + 0.5 * dt * (l10a + l10b)
    return out, ok


def base_observer(integ):
    m = integ.model
    M = m.M

    def obs(state):
        phi = state.phi
        K = m.kinetic(phi)
        P = m.sextic(phi)
        return {"t": state.t, "d_u": abs(K - M), "kinetic": K, "E": 0.5 * K - P / 6,
                "mass": m.l2(phi), "L6": P ** (1 / 6), "Linf": integ.linf(phi), "S_cum": state.S}
    return obs


def evolve(state, t_end, controls=None, observers=(), model=None, integ=None):
    """Advance to t_end with adaptive steps, sampling observers every sample_dt.

    Backward runs (t_end < t) use the conjugation symmetry: u(t0 - s) is
    the conjugate of the forward flow applied to the conjugate datum.
    Terminates early with status "blowup" on step collapse or "failed" on
    non-finite values.
    """
    if integ is None:
        integ = Integrator(model, controls)
    c = integ.c
    if t_end == state.t:
        raise ValueError("t_end must differ from the current time")
    st = state.copy()
    sign = 1 if t_end > st.t else -1
    if sign != st.direction:
        st.phi = np.conj(st.phi)
        st.direction = sign
    integ.set_reference(st.phi)
    obs0 = base_observer(integ)
    rec = OrbitRecord()
    rec.meta.update(method=c.method, dt_max=c.dt_max, direction=sign, M=integ.model.M)

    def physical(s):
        # field in physical time orientation
        return s if s.direction == 1 else replace(s, phi=np.conj(s.phi))

    def sample(s):
        ps = physical(s)
        row = obs0(ps)
        for o in observers:
            row.update(o(ps) or {})
        rec.append(row, ps.phi if c.keep_fields else None)

    sample(st)
    t0, k_sample = st.t, 1

    def sample_time(k):
        # multiples of sample_dt from t0, no accumulated round-off
        ts = t0 + sign * k * c.sample_dt
        return t_end if sign * (t_end - ts) < 1e-9 * c.sample_dt else ts
    next_sample = sample_time(k_sample)
    K_W = integ.model.M
    linf0 = integ.linf(st.phi)
    steps = 0
    while sign * (t_end - st.t) > 0:
        target = min(next_sample, t_end) if sign > 0 else max(next_sample, t_end)
        dist = sign * (target - st.t)
        dt = integ.choose_dt(st.phi)
        # split the way to the next sample evenly, so steps land on it exactly
        m_left = max(1, int(np.ceil(dist / dt * (1 - 1e-9))))
        hit = m_left == 1
        dt = dist if hit else dist / m_left
        new, ok = step(st, dt, integ)
        tries = 0
        while not ok and tries < 30:
            dt *= 0.5
            tries += 1
            if dt < c.dt_floor:
                break
            hit = False
            new, ok = step(st, dt, integ)
        if not ok or dt < c.dt_floor:
            grad = integ.model.kinetic(st.phi)
            rec.status = "blowup" if np.all(np.isfinite(st.phi)) else "failed"
            rec.reason = f"step collapse (dt={dt:.3e}, kinetic/M={grad / K_W:.3e})"
            break
        st = new
        steps += 1
        if hit:
            st.t = target
        if hit and target == next_sample:
            sample(st)
            k_sample += 1
            next_sample = sample_time(k_sample)
        linf = integ.linf(st.phi)
        K = integ.model.kinetic(st.phi)
        if c.adaptive and integ.choose_dt(st.phi) < c.dt_floor:
            rec.status = "blowup"
            rec.reason = f"dt collapse with kinetic/M={K / K_W:.3e}, Linf growth {linf / linf0:.3e}"
            break
        if K > c.grad_factor ** 2 * K_W:
            rec.status = "blowup"
            rec.reason = f"gradient norm above {c.grad_factor:g} ||W|| (dt={dt:.3e})"
            break
        if steps >= c.max_steps:
            rec.status = "budget"
            rec.reason = "step budget exhausted"
            break
    else:
        rec.status = "completed"
    if rec.columns["t"][-1] != st.t:
        sample(st)
    rec.final = physical(st)
    rec.meta["steps"] = steps
    return rec


def scattering_size(record):
    """Cumulative int int |u|^10 dx dt at the end of the record."""
    s = record.array("S_cum")
    return float(s[-1]) if s.size else 0.0

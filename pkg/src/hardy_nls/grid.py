"""Radial grids, quadrature and discretized sector operators.

A radial profile in angular sector l is stored in desingularized form
u(r) = r**s * phi(r), s = s_plus(l). Derivatives are taken in the node index
k of a smooth map r(k), so geometric grading near the origin costs nothing in
accuracy. The quadratic form of -Delta + (a + mu_l)/r^2 becomes, after the
substitution, Q(phi) = 4 pi int r**(2 nu + 1) |phi_r|^2 dr with
nu = s + 1/2 = sqrt(1/4 + a + mu_l), which is positive definite for a > -1/4.
"""
from dataclasses import dataclass, field
from functools import cached_property
import hashlib

import numpy as np
import scipy.sparse as sp
from scipy import integrate as sint
from scipy.linalg import cholesky_banded, cho_solve_banded
from scipy.optimize import brentq
from scipy.special import bernoulli, factorial

A_MIN, A_MAX = -0.09, 0.0
ADMISSIBLE = "(-1/4+4/25, 0) = (-0.09, 0)"


class ConfigurationError(ValueError):
    """Invalid physical or grid parameters."""


class UsageError(ValueError):
    """Objects combined in an unsupported way."""


@dataclass(frozen=True)
class PhysParams:
    a: float

    def __post_init__(self):
        a = float(self.a)
        if not (A_MIN < a < A_MAX) or not np.isfinite(a):
            raise ConfigurationError(f"a={a} outside the admissible interval {ADMISSIBLE}")
        object.__setattr__(self, "a", a)

    dim = 3

    @property
    def beta(self):
        return float(np.sqrt(1.0 + 4.0 * self.a))


def mu_l(ell):
    return ell * (ell + 1)


def nu_exponent(params, ell=0):
    return float(np.sqrt(0.25 + params.a + mu_l(ell)))


def s_plus(params, ell=0):
    """Admissible indicial root (-1 + sqrt(1 + 4(a + mu_l)))/2."""
    return nu_exponent(params, ell) - 0.5


def s_minus(params, ell=0):
    return -nu_exponent(params, ell) - 0.5


def _gregory_end(m=6):
    # end corrections of order m from the Euler-Maclaurin expansion
    B = bernoulli(2 * m)
    V = np.array([np.arange(m, dtype=float) ** p for p in range(m)])
    rhs = np.zeros(m)
    rhs[0] = -0.5
    for j in range(1, m):
        p = 2 * j - 1
        if p < m:
            rhs[p] += B[2 * j] / factorial(2 * j) * factorial(p)
    return 1.0 + np.linalg.solve(V, rhs)


GREGORY = _gregory_end(6)


@dataclass(frozen=True)
class Grading:
    """Node map r(k), k = 1..n.

    kind = "geometric": cells grow by a constant ratio, r_k = r_1 (q^k - 1)/(q - 1).
    kind = "log": r_k = r_1 q^(k-1), pure logarithmic spacing.
    kind = "hybrid" (default): r = L softplus(eta (k - k0)), logarithmic near 0
    and uniform in the tail with cell size `tail_cell` (default 2.5 r_max / n).
    Either `r_min` (first node) or `ratio` fixes the grading.
    """
    kind: str = "hybrid"
    r_min: float | None = 1e-4
    ratio: float | None = None
    tail_cell: float | None = None

    def to_dict(self):
        return {"kind": self.kind, "r_min": self.r_min, "ratio": self.ratio,
                "tail_cell": self.tail_cell}


class _Map:
    """Smooth node map r(k) and its derivative, valid for real k."""

    def __init__(self, grading, n, r_max):
        self.kind = grading.kind
        g = grading
        if g.kind == "geometric":
            if g.ratio is not None:
                q = float(g.ratio)
            else:
                f = lambda lq: r_max * np.expm1(lq) / np.expm1(n * lq) - g.r_min
                hi = 50.0 / n
                if f(1e-12) < 0:
                    raise ConfigurationError("r_min too large for a geometric grid")
                q = float(np.exp(brentq(f, 1e-12, hi, xtol=1e-15, rtol=1e-15)))
            if q <= 1.0:
                raise ConfigurationError("geometric ratio must exceed 1")
            self.lq = np.log(q)
            self.r1 = r_max * np.expm1(self.lq) / np.expm1(n * self.lq)
        elif g.kind == "log":
            if g.ratio is not None:
                self.lq = np.log(g.ratio)
                self.r1 = r_max * np.exp(-(n - 1) * self.lq)
            else:
                self.r1 = float(g.r_min)
                self.lq = np.log(r_max / self.r1) / (n - 1)
        elif g.kind == "hybrid":
            h = g.tail_cell if g.tail_cell is not None else 2.5 * r_max / n
            if g.r_min is None:
                raise ConfigurationError("hybrid grading needs r_min and tail_cell")
            if h * (n - 1) <= r_max:
                raise ConfigurationError("tail_cell too small to reach r_max")
            sp_ = lambda x: np.logaddexp(0.0, x)

            def k0_for(eta):
                # r(1) = r_min fixes k0 for a given eta
                L = h / eta
                return 1.0 - np.log(np.expm1(g.r_min / L)) / eta

            def gap(eta):
                return h / eta * sp_(eta * (n - k0_for(eta))) - r_max
            lo, hi = 1e-4, 5.0
            if gap(lo) * gap(hi) > 0:
                raise ConfigurationError("cannot fit hybrid grading")
            self.eta = brentq(gap, lo, hi, xtol=1e-15, rtol=1e-15)
            self.L = h / self.eta
            self.k0 = k0_for(self.eta)
        else:
            raise ConfigurationError(f"unknown grading kind {g.kind!r}")

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        if self.kind == "geometric":
            r = self.r1 * np.expm1(k * self.lq) / np.expm1(self.lq)
            dr = self.r1 * self.lq * np.exp(k * self.lq) / np.expm1(self.lq)
        elif self.kind == "log":
            r = self.r1 * np.exp((k - 1) * self.lq)
            dr = self.lq * r
        else:
            x = self.eta * (k - self.k0)
            r = self.L * np.logaddexp(0.0, x)
            dr = self.L * self.eta / (1.0 + np.exp(-x))
        return r, dr


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Nodes r_1 < ... < r_n = r_max with quadrature weights for int f 4 pi r^2 dr."""
    n: int
    r_max: float
    grading: Grading
    r: np.ndarray = field(repr=False)
    dr: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    _map: _Map = field(repr=False)

    def at(self, k):
        """Map values r(k), r'(k) at fractional node indices (1-based)."""
        return self._map(k)

    def integrate(self, f, power=0.0):
        """Quadrature of int_0^r_max f 4 pi r^2 dr.

        `power` is the leading exponent of f at the origin; the first cell
        [0, r_1] is integrated analytically under f ~ f_1 (r/r_1)**power.
        """
        f = np.asarray(f)
        return np.sum(self.weights * f, axis=-1) + self.left_tail(power) * f[..., 0]

    def left_tail(self, power):
        return 4 * np.pi * self.r[0] ** 3 / (power + 3.0)

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.r).tobytes())
        h.update(repr(self.grading.to_dict()).encode())
        return h.hexdigest()[:16]


def build_grid(params, n=1024, r_max=200.0, grading=None):
    """Radial grid with geometric clustering at the origin.

    The default grading is logarithmic near the origin (first node 1e-4) and
    uniform in the tail; see `Grading` for the alternatives.
    """
    if grading is None:
        grading = Grading()
    if not isinstance(n, (int, np.integer)) or n < 16:
        raise ConfigurationError("n must be an integer >= 16")
    if not (np.isfinite(r_max) and r_max > 1):
        raise ConfigurationError("r_max must exceed 1")
    m = _Map(grading, n, float(r_max))
    k = np.arange(1, n + 1, dtype=float)
    r, dr = m(k)
    r[-1] = r_max
    if not (r[0] > 0 and np.all(np.diff(r) > 0)):
        raise ConfigurationError("grading produced a non-monotone grid")
    g = np.ones(n)
    g[0] = 0.5
    g[-len(GREGORY):] = GREGORY[::-1]
    w = 4 * np.pi * r ** 2 * dr * g
    return RadialGrid(n=n, r_max=float(r_max), grading=grading, r=r, dr=dr, weights=w, _map=m)


@dataclass(frozen=True, eq=False)
class RadialField:
    """Complex radial profile u = r**s phi in sector ell."""
    grid: RadialGrid
    params: PhysParams
    phi: np.ndarray
    ell: int = 0

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=complex)
        if phi.shape != (self.grid.n,):
            raise UsageError("field values do not match the grid")
        if not np.all(np.isfinite(phi)):
            raise ConfigurationError("non-finite field values")
        object.__setattr__(self, "phi", phi)

    @property
    def s(self):
        return s_plus(self.params, self.ell)

    @property
    def u(self):
        return self.grid.r ** self.s * self.phi

    @classmethod
    def from_u(cls, grid, params, u, ell=0):
        return cls(grid, params, np.asarray(u) / grid.r ** s_plus(params, ell), ell)

    @classmethod
    def from_function(cls, grid, params, f, ell=0):
        return cls.from_u(grid, params, f(grid.r), ell)

    def with_phi(self, phi):
        return RadialField(self.grid, self.params, phi, self.ell)

    def __add__(self, other):
        _check_pair(self, other)
        return self.with_phi(self.phi + other.phi)

    def __sub__(self, other):
        _check_pair(self, other)
        return self.with_phi(self.phi - other.phi)

    def __mul__(self, c):
        return self.with_phi(self.phi * c)

    __rmul__ = __mul__

    def conj(self):
        return self.with_phi(np.conj(self.phi))


def _check_pair(f, g):
    if f.grid is not g.grid and not np.array_equal(f.grid.r, g.grid.r):
        raise UsageError("fields live on different grids")
    if f.ell != g.ell:
        raise UsageError("fields live in different sectors")
    if f.params.a != g.params.a:
        raise UsageError("fields carry different couplings")


class Stencil:
    """Fourth-order staggered derivative in k with the boundary closures.

    Left: constant ghosts (phi is flat in log r below r_1).
    Right: ghosts continue the decaying branch u ~ r**s_minus, i.e.
    phi ~ r**(-2 nu), and the energy of that tail beyond the first ghost is
    added exactly as 2 nu r_g**(2 nu) phi_g**2.
    """

    def __init__(self, grid, nu):
        n = grid.n
        self.grid, self.nu = grid, nu
        kg = np.array([n + 1.0, n + 2.0])
        rg, _ = grid.at(kg)
        self.ghost_ratio = (rg / grid.r[-1]) ** (-2 * nu)
        self.r_ghost = rg[0]
        # extended index e = k + 1 for k = -1..n+2 (1-based nodes k=1..n)
        ne = n + 4
        rows, cols, vals = [], [], []
        for e in range(ne):
            k = e - 1
            if 1 <= k <= n:
                rows.append(e); cols.append(k - 1); vals.append(1.0)
            elif k < 1:
                rows.append(e); cols.append(0); vals.append(1.0)
            else:
                rows.append(e); cols.append(n - 1); vals.append(self.ghost_ratio[k - n - 1])
        E = sp.csr_matrix((vals, (rows, cols)), shape=(ne, n))
        # midpoints k + 1/2 for k = 0..n (k=0 and k=n touch ghosts)
        nm = n + 1
        rows, cols, vals = [], [], []
        for j in range(nm):
            e = j + 1  # extended index of left neighbour k=j
            for off, c in ((-1, 1 / 24), (0, -9 / 8), (1, 9 / 8), (2, -1 / 24)):
                rows.append(j); cols.append(e + off); vals.append(c)
        D = sp.csr_matrix((vals, (rows, cols)), shape=(nm, ne))
        self.D = (D @ E).tocsr()
        km = np.arange(nm) + 0.5
        rm, drm = grid.at(km)
        # the k=1/2 midpoint can fall at r <= 0 for geometric cells; the
        # derivative there vanishes identically with constant ghosts
        rm = np.where(rm > 0, rm, grid.r[0] * 0.5)
        self.cm = 4 * np.pi * rm ** (2 * nu + 1) / drm
        self.tail = 4 * np.pi * 2 * nu * self.r_ghost ** (2 * nu) * self.ghost_ratio[0] ** 2

    def stiffness(self):
        A = (self.D.T @ sp.diags(self.cm) @ self.D).tolil()
        A[-1, -1] += self.tail
        return A.tocsr()


def mass_diag(grid, s, power_extra=0.0):
    """Lumped mass for int |u|^2 r^(power_extra) 4 pi r^2 dr with u = r**s phi.

    Interior nodes carry their full dual cell (unit weight in k); the first
    node adds the analytic piece [0, r_1].
    """
    r, dr = grid.r, grid.dr
    p = 2 * s + power_extra
    g = np.ones(grid.n)
    g[0] = 0.5
    m = 4 * np.pi * r ** (p + 2) * dr * g
    m[0] += 4 * np.pi * r[0] ** (p + 3) / (p + 3)
    return m


def w_closed(params, r):
    b = params.beta
    r = np.asarray(r, dtype=float)
    return (3 * b * b) ** 0.25 * r ** ((b - 1) / 2) / np.sqrt(1 + r ** (2 * b))


@dataclass(eq=False)
class SectorOperator:
    """Symmetric matrix of -d_rr - (2/r) d_r + (a + mu_l)/r^2 - c W^4.

    Acts on desingularized node values: (A phi) approximates the weak form
    against hat functions, so B^{-1} A phi ~ r**(-s) (L u) with B = mass.
    """
    grid: RadialGrid
    params: PhysParams
    ell: int
    c: float
    sparse: sp.csr_matrix = field(repr=False)
    mass: np.ndarray = field(repr=False)
    potential: np.ndarray = field(repr=False)

    @property
    def s(self):
        return s_plus(self.params, self.ell)

    @cached_property
    def matrix(self):
        return self.sparse.toarray()

    def banded(self, shift=0.0):
        """Upper banded storage of A - shift*B (bandwidth 3)."""
        A = self.sparse - sp.diags(shift * self.mass)
        return _to_upper_banded(A, 3)

    def apply(self, phi):
        return self.sparse @ phi

    def form(self, f, g):
        return float(np.real(np.vdot(g, self.sparse @ f)))


def _to_upper_banded(A, u):
    A = sp.dia_matrix(A)
    n = A.shape[0]
    ab = np.zeros((u + 1, n))
    for off in range(u + 1):
        d = A.diagonal(off)
        ab[u - off, off:] = d
    return ab


def _w4_tails(params, grid, s, nu):
    r1, rn = grid.r[0], grid.r[-1]
    W = lambda x: w_closed(params, x)
    left = sint.quad(lambda x: W(x) ** 4 * x ** (2 * s + 2), 0, r1, epsabs=0, epsrel=1e-12)[0]
    right = sint.quad(lambda x: W(x) ** 4 * x ** 2 * (x / rn) ** (2 * (-nu - 0.5)),
                      rn, np.inf, epsabs=0, epsrel=1e-12, limit=200)[0] * rn ** (2 * s)
    return 4 * np.pi * left, 4 * np.pi * right


def potential_closed(grid, params, ell):
    """Diagonal of int W^4 |u|^2 dx in the desingularized basis, closed-form W."""
    s, nu = s_plus(params, ell), nu_exponent(params, ell)
    r = grid.r
    m = mass_diag(grid, s)
    V = m * w_closed(params, r) ** 4
    # replace the analytic first-cell piece by the exact W^4 weighted integral
    V[0] -= 4 * np.pi * r[0] ** (2 * s + 3) / (2 * s + 3) * w_closed(params, r[0]) ** 4
    left, right = _w4_tails(params, grid, s, nu)
    V[0] += left
    V[-1] += right
    return V


def assemble_sector_op(grid, params, ell=0, c=0, potential=None):
    """Sector operator -Delta_l + (a + mu_l)/r^2 - c W^4.

    `potential` overrides the W^4 mass diagonal (used for the discrete ground
    state); by default the closed-form W is used.
    """
    if c not in (0, 1, 5):
        raise UsageError(f"unsupported potential coefficient c={c}; use 0, 1 or 5")
    if ell < 0:
        raise UsageError("sector index must be nonnegative")
    s, nu = s_plus(params, ell), nu_exponent(params, ell)
    A = Stencil(grid, nu).stiffness()
    if potential is None:
        potential = potential_closed(grid, params, ell) if c else np.zeros(grid.n)
    if c:
        A = A - c * sp.diags(potential)
    return SectorOperator(grid, params, ell, c, A.tocsr(), mass_diag(grid, s), potential)


_STIFF_CACHE = {}


def stiffness_factor(grid, params, ell=0):
    """Cholesky factor (banded) of the c=0 operator, cached per grid and sector."""
    key = (id(grid), params.a, ell)
    hit = _STIFF_CACHE.get(key)
    if hit is not None and hit[0] is grid:
        return hit[1], hit[2]
    op = assemble_sector_op(grid, params, ell, 0)
    cb = cholesky_banded(op.banded(), lower=False)
    if len(_STIFF_CACHE) > 16:
        _STIFF_CACHE.clear()
    _STIFF_CACHE[key] = (grid, op, cb)
    return op, cb


def inner_a(f, g):
    """Re <f, g> in the energy space: int grad f . grad g + (a + mu_l) f g / r^2."""
    _check_pair(f, g)
    op, _ = stiffness_factor(f.grid, f.params, f.ell)
    return float(np.real(np.vdot(g.phi, op.sparse @ f.phi)))


def l2_inner(f, g):
    _check_pair(f, g)
    m = mass_diag(f.grid, f.s)
    return float(np.real(np.sum(m * f.phi * np.conj(g.phi))))


def solve_c0(grid, params, rhs, ell=0):
    """Solve A_0 x = rhs with the cached banded Cholesky factor."""
    _, cb = stiffness_factor(grid, params, ell)
    return cho_solve_banded((cb, False), rhs)


def apply_exact(grid, params, f, ell=0):
    """Apply the sector Laplacian stencil to a function known on (0, inf).

    Ghost values are sampled from `f` itself, so the result measures the
    consistency of the stencil with the continuous operator, free of the
    closure model. Returns r**(-s) (-Delta_l + (a+mu_l)/r^2) f at the nodes.
    """
    s, nu = s_plus(params, ell), nu_exponent(params, ell)
    n = grid.n
    ke = np.arange(-2, n + 4, dtype=float)
    re, _ = grid.at(ke)
    ok = re > 0
    phie = np.empty(n + 6)
    phie[ok] = f(re[ok]) / re[ok] ** s
    # non-positive radii only occur for geometric cells; use the regular branch
    phie[~ok] = phie[ok][0]
    km = np.arange(-1, n + 2) + 0.5
    rm, drm = grid.at(km)
    rm = np.where(rm > 0, rm, grid.r[0] * 0.5)
    cm = 4 * np.pi * rm ** (2 * nu + 1) / np.abs(drm)
    j = np.arange(n + 3) + 1  # extended index of the left neighbour
    d = (phie[j - 1] / 24 - 9 / 8 * phie[j] + 9 / 8 * phie[j + 1] - phie[j + 2] / 24)
    fl = cm * d
    out = -(9 / 8 * (fl[2:-1] - fl[1:-2]) - (fl[3:] - fl[:-3]) / 24)
    vol = 4 * np.pi * grid.r ** (2 * s + 2) * grid.dr
    return out / vol

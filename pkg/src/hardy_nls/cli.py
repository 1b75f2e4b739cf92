"""Scenario configs, the runner and the command-line entry point.

A scenario is described by key = value text. Every artifact a run writes
(report, CSV tables) carries the config hash and the grid fingerprint; the
wall-clock data go to a separate meta file so the bodies stay reproducible.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
import argparse
import csv
import datetime
import hashlib
import io
import numbers
import os
import sys
import time

KINDS = ("spectrum", "orbit", "classify", "lp-sweep", "virial-check", "evolve")
OUT_ENV = "HARDY_NLS_OUT"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PROPERTY = 3
EXIT_NUMERICAL = 4
EXIT_UNDECIDED = 5

A_INTERVAL = "(-1/4+4/25, 0)"


class ConfigError(ValueError):
    """Raised with the full list of field errors."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ScenarioConfig:
    kind: str = "spectrum"
    a: float = -0.04
    n: int = 512
    r_max: float = 200.0
    grading: str = "hybrid"
    r_min: float = 1e-4
    seed: int = 0
    out: str = ""
    # spectrum
    n_eigs: int = 6
    # orbits and time stepping
    branch: str = "minus"
    eps: float | None = None
    t_end: float | None = None
    dt_max: float = 1e-3
    sample_dt: float | None = None
    method: str = "cn"
    R: float = 5.0
    # classify / evolve data
    datum: str = "soliton"
    theta: float = 0.0
    mu: float = 1.0
    amp: float = 1.0
    R0: float = 10.0
    width: float = 1.0
    expect: str = ""
    # lp-sweep
    y0: list = field(default_factory=lambda: [1e-2, 5e-3, 2.5e-3])
    lp_dt: float = 0.005
    # virial-check
    radii: list = field(default_factory=lambda: [2.0, 5.0, 10.0])
    resolved: float = 1e-4

    def serialize(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                v = ",".join(repr(float(x)) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            elif v is None:
                v = ""
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def config_hash(self):
        """sha256 of the serialized config without the output location."""
        text = "\n".join(l for l in self.serialize().splitlines() if not l.startswith("out ="))
        return hashlib.sha256(text.encode()).hexdigest()


# kind-dependent defaults for the knobs left as None
KIND_DEFAULTS = {
    "orbit": {"eps": 0.05, "t_end": 8.0, "sample_dt": 0.05},
    "classify": {"t_end": 10.0, "sample_dt": 0.05},
    "evolve": {"t_end": 1.0, "sample_dt": 0.05},
    "virial-check": {"eps": 0.05, "t_end": 2.0, "sample_dt": 0.02},
}
DATA = ("soliton", "amplitude", "blowup", "bump")
BRANCHES = ("minus", "plus", "unstable")


def _convert(name, raw, typ):
    raw = raw.strip()
    if typ == "list":
        return [float(x) for x in raw.split(",") if x.strip()]
    if raw == "" and typ != "str":
        return None
    if typ == "int":
        return int(raw)
    if typ == "float":
        return float(raw)
    return raw


def _types():
    out = {}
    for f in fields(ScenarioConfig):
        t = str(f.type)
        if "list" in t:
            out[f.name] = "list"
        elif "int" in t:
            out[f.name] = "int"
        elif "float" in t:
            out[f.name] = "float"
        else:
            out[f.name] = "str"
    return out


def validate(cfg):
    errs = []
    if cfg.kind not in KINDS:
        errs.append(f"kind: {cfg.kind!r} is not one of {', '.join(KINDS)}")
    if not (-0.09 < cfg.a < 0):
        errs.append(f"a: {cfg.a!r} outside the admissible interval {A_INTERVAL} = (-0.09, 0)")
    if cfg.n < 64:
        errs.append("n: need at least 64 nodes")
    if not cfg.r_max > 10:
        errs.append("r_max: must exceed 10")
    if cfg.grading not in ("hybrid", "geometric", "log"):
        errs.append(f"grading: unknown kind {cfg.grading!r}")
    if not (0 < cfg.r_min < 1):
        errs.append("r_min: must lie in (0, 1)")
    if cfg.branch not in BRANCHES:
        errs.append(f"branch: must be one of {', '.join(BRANCHES)}")
    if cfg.datum not in DATA:
        errs.append(f"datum: must be one of {', '.join(DATA)}")
    if cfg.method not in ("cn", "strang"):
        errs.append("method: must be cn or strang")
    if cfg.eps is not None and not cfg.eps > 0:
        errs.append("eps: must be positive")
    if cfg.t_end is not None and not cfg.t_end > 0:
        errs.append("t_end: must be positive")
    if cfg.sample_dt is not None and not cfg.sample_dt > 0:
        errs.append("sample_dt: must be positive")
    if not cfg.dt_max > 0:
        errs.append("dt_max: must be positive")
    if not cfg.mu > 0:
        errs.append("mu: must be positive")
    if cfg.kind == "lp-sweep" and (len(cfg.y0) < 2 or any(y <= 0 for y in cfg.y0)):
        errs.append("y0: need at least two positive seeds")
    if any(R <= 0 or 3 * R > cfg.r_max for R in cfg.radii + [cfg.R]):
        errs.append("R/radii: each radius must lie in (0, r_max/3]")
    from .threshold import VERDICTS
    if cfg.expect and cfg.expect not in VERDICTS:
        errs.append(f"expect: must be one of {', '.join(VERDICTS)}")
    return errs


def parse_config(text, overrides=None):
    """Parse key = value text ('#' starts a comment) into a validated ScenarioConfig.

    Raises ConfigError carrying every field error found.
    """
    types = _types()
    vals, errs = {}, []
    items = []
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errs.append(f"line {ln}: expected key = value")
            continue
        k, v = line.split("=", 1)
        items.append((k.strip(), v, f"line {ln}"))
    for ov in overrides or ():
        if "=" not in ov:
            errs.append(f"override {ov!r}: expected key=value")
            continue
        k, v = ov.split("=", 1)
        items.append((k.strip(), v, "override"))
    for k, v, where in items:
        if k not in types:
            errs.append(f"{where}: unknown key {k!r}")
            continue
        try:
            vals[k] = _convert(k, v, types[k])
        except ValueError:
            errs.append(f"{k}: cannot read {v.strip()!r} as {types[k]}")
    if errs:
        raise ConfigError(errs)
    cfg = ScenarioConfig(**{k: v for k, v in vals.items() if v is not None or types[k] == "str"})
    for k, v in KIND_DEFAULTS.get(cfg.kind, {}).items():
        if getattr(cfg, k) is None:
            setattr(cfg, k, v)
    errs = validate(cfg)
    if errs:
        raise ConfigError(errs)
    return cfg


# ---------------------------------------------------------------------------
# artifacts

@dataclass
class RunResult:
    exit_code: int
    status: str
    report: dict
    paths: list
    directory: str


class _Artifacts:
    def __init__(self, cfg, root, fingerprint):
        self.cfg = cfg
        self.hash = cfg.config_hash()
        self.fp = fingerprint
        self.dir = os.path.join(root, f"{cfg.kind}-{self.hash[:12]}")
        os.makedirs(self.dir, exist_ok=True)
        self.paths = []

    def _write(self, name, text):
        p = os.path.join(self.dir, name)
        with open(p, "w") as fh:
            fh.write(text)
        self.paths.append(p)
        return p

    def stamp(self):
        return f"# config_hash={self.hash}\n# grid_fingerprint={self.fp}\n"

    def csv(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if x is None else _fmt(x) for x in row])
        return self._write(name, self.stamp() + buf.getvalue())

    def raw_csv(self, name, text):
        return self._write(name, self.stamp() + text)

    def report(self, rep):
        lines = [f"config_hash = {self.hash}", f"grid_fingerprint = {self.fp}"]
        for k, v in rep.items():
            lines.append(f"{k} = {_fmt(v)}")
        return self._write("report.txt", "\n".join(lines) + "\n")

    def config(self):
        return self._write("config.txt", self.cfg.serialize())

    def meta(self, elapsed):
        now = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
        text = f"config_hash = {self.hash}\ngrid_fingerprint = {self.fp}\nfinished = {now}\nwall_seconds = {elapsed:.3f}\n"
        return self._write("meta.txt", text)


def np_bool():
    import numpy as np
    return np.bool_


def _fmt(v):
    if isinstance(v, (bool, np_bool())):
        return str(bool(v)).lower()
    if isinstance(v, numbers.Integral):
        return str(int(v))
    if isinstance(v, numbers.Real):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


# ---------------------------------------------------------------------------
# scenarios

def _setup(cfg):
    from .grid import Grading, PhysParams, build_grid
    from .ground_state import discrete_ground_state
    P = PhysParams(cfg.a)
    gr = Grading(kind=cfg.grading, r_min=cfg.r_min) if cfg.grading != "geometric" else \
        Grading(kind="geometric", r_min=cfg.r_min)
    g = build_grid(P, cfg.n, cfg.r_max, gr)
    return P, g, discrete_ground_state(P, g)


def _spectrum(cfg, model, art):
    import numpy as np
    from .grid import assemble_sector_op
    from .spectral import (generalized_kernel_check, l2_cosine, sector_spectrum,
                           solve_trichotomy)
    from .ground_state import w1_profile
    P, g = model.params, model.grid
    s5 = sector_spectrum(model.sector_op(5), cfg.n_eigs)
    s1 = sector_spectrum(model.sector_op(1), cfg.n_eigs)
    op15 = assemble_sector_op(g, P, 1, 5)
    s15 = sector_spectrum(op15, cfg.n_eigs)
    tr = solve_trichotomy(P, g, model)
    kc = generalized_kernel_check(tr)
    w1 = w1_profile(P, g.r) / g.r ** model.s
    k5 = int(np.argmin(np.abs(s5.eigenvalues)))
    k1 = int(np.argmin(np.abs(s1.eigenvalues)))
    cos_w1 = l2_cosine(model.sector_op(5), s5.eigenvectors[:, k5], w1)
    cos_w = l2_cosine(model.sector_op(1), s1.eigenvectors[:, k1], model.phi_h)
    lhs, rhs = tr.identity_check()
    rows = []
    for sp_ in (s5, s1, s15):
        for j, lam in enumerate(sp_.eigenvalues):
            rows.append((sp_.ell, sp_.c, j, lam))
    art.csv("eigenvalues.csv", ["ell", "c", "index", "eigenvalue"], rows)
    rep = {"negative_count": s5.negative_count, "kernel_dim": kc["kernel_dim"], "e0": tr.e0,
           "lambda_c5": s5.eigenvalues.tolist(), "lambda_c1": s1.eigenvalues.tolist(),
           "lambda_l1_c5": s15.eigenvalues.tolist(), "cos_kernel_W1": cos_w1, "cos_kernel_W": cos_w,
           "eigen_residual": tr.residual, "identity_rel": abs(lhs - rhs) / abs(lhs),
           "LVp_Vp": tr.pair(tr.L_dual(tr.vp), tr.vp), "LVm_Vm": tr.pair(tr.L_dual(tr.vm), tr.vm)}
    ok = (s5.negative_count == 1 and kc["kernel_dim"] == 2 and s15.eigenvalues[0] > 0
          and cos_w1 >= 0.999 and cos_w >= 0.999 and tr.e0 > 0)
    return rep, ok


def _rate_summary(rec, e0, branch):
    import numpy as np
    from .threshold import fit_rate
    t = rec.array("t")
    M = rec.meta["M"]
    if branch == "unstable":
        dev = rec.array("dev")
        fr = fit_rate(t, dev, lo=dev[0] * np.e, hi=1e-2 * np.sqrt(M))
    else:
        fr = fit_rate(t, rec.array("d_u"), lo=1e-9 * M, hi=1e-1 * M)
    return fr, abs(abs(fr["rate"]) - e0) / e0


def _orbit(cfg, model, art):
    import numpy as np
    from .evolution import EvolveControls, evolve, make_state
    from .modulation import modulation_observer
    from .spectral import solve_trichotomy
    from .threshold import build_threshold_orbit, deviation_observer
    tr = solve_trichotomy(model.params, model.grid, model)
    ctl = EvolveControls(dt_max=cfg.dt_max, sample_dt=cfg.sample_dt, method=cfg.method)
    obs = (modulation_observer(model, R=cfg.R),)
    rep = {"e0": tr.e0, "branch": cfg.branch, "eps": cfg.eps}
    if cfg.branch == "unstable":
        u0 = model.phi_h + cfg.eps * tr.vp
        rec = evolve(make_state(model, u0), cfg.t_end, ctl,
                     observers=(deviation_observer(model),) + obs, model=model)
    else:
        rec, st = build_threshold_orbit(tr, cfg.branch, cfg.eps, cfg.t_end, ctl, obs)
        rep.update(y0_minus=st.y0_minus, y0_plus=st.y0_plus, lp_iterations=st.iterations)
    art.raw_csv("orbit.csv", rec.to_csv())
    fr, dev = _rate_summary(rec, tr.e0, cfg.branch)
    E = rec.array("E")
    rep.update(status=rec.status, reason=rec.reason, t_final=float(rec.array("t")[-1]),
               rate=fr["rate"], rate_r2=fr["r2"], rate_efoldings=fr["efoldings"],
               rate_rel_dev=dev, energy_drift=float(np.max(np.abs(E - E[0]))))
    if rec.status == "failed":
        return rep, None
    return rep, bool(dev <= 0.1 and fr["r2"] >= 0.99)


def make_datum(cfg, model):
    """(model, initial field) for classify/evolve runs.

    Soliton data are e^{i theta} W_h carried to scale mu on the mu-scaled
    grid, which is an exact stationary point of the scaled discrete model.
    """
    import numpy as np
    from .ground_state import rescale_model
    from .threshold import tuned_blowup_datum
    if cfg.datum in ("soliton", "amplitude"):
        m = model if cfg.mu == 1 else rescale_model(model, cfg.mu)
        amp = cfg.amp if cfg.datum == "amplitude" else 1.0
        return m, amp * np.exp(1j * cfg.theta) * m.phi_h
    if cfg.datum == "blowup":
        u0, _ = tuned_blowup_datum(model, cfg.R0)
        return model, u0 + 0j
    # random smooth bump with kinetic amp^2 * M / 4
    rng = np.random.default_rng(cfg.seed)
    r = model.grid.r
    c = rng.normal(size=3) + 1j * rng.normal(size=3)
    cen = rng.uniform(0.0, 3.0, size=3) * cfg.width
    u = sum(cj * np.exp(-((r - q) / cfg.width) ** 2) for cj, q in zip(c, cen))
    phi = u / r ** model.s
    return model, phi * cfg.amp * np.sqrt(0.25 * model.M / model.kinetic(phi))


def _classify(cfg, model, art):
    from .evolution import EvolveControls
    from .threshold import ClassifyBudget, classify
    b = ClassifyBudget(t_end=cfg.t_end, dt_max=cfg.dt_max, sample_dt=cfg.sample_dt)
    ctl = EvolveControls(dt_max=cfg.dt_max, sample_dt=cfg.sample_dt, method=cfg.method)
    m, u0 = make_datum(cfg, model)
    v = classify(m, u0, b, ctl)
    art.raw_csv("orbit.csv", v.record.to_csv())
    rep = {"verdict": v.label}
    for k, x in v.evidence.items():
        if isinstance(x, dict):
            for kk, xx in x.items():
                rep[f"{k}_{kk}"] = xx
        else:
            rep[k] = x
    if v.record.status == "failed":
        return rep, None
    if v.label == "undecided":
        return rep, "undecided"
    return rep, (v.label == cfg.expect) if cfg.expect else True


def _lp_sweep(cfg, model, art):
    import numpy as np
    from .spectral import solve_trichotomy
    from .threshold import lp_solve
    tr = solve_trichotomy(model.params, model.grid, model)
    ys, yp, vc, fac = [], [], [], []
    for y in cfg.y0:
        st = lp_solve(y, tr, dt=cfg.lp_dt)
        ys.append(y)
        yp.append(st.y0_plus)
        vc.append(st.vc0_norm)
        fac.append(st.max_contraction)
    size = np.abs(yp) + np.array(vc)
    lx, ly = np.log(ys), np.log(size)
    slope = float(np.polyfit(lx, ly, 1)[0])
    local = [None] + [float((ly[j] - ly[j - 1]) / (lx[j] - lx[j - 1])) for j in range(1, len(ys))]
    art.csv("lp_sweep.csv", ["y0_minus", "y0_plus", "vc_norm", "slope"],
            zip(ys, yp, vc, local))
    rep = {"e0": tr.e0, "slope": slope, "max_contraction": float(max(fac)),
           "contraction_factors": fac}
    return rep, bool(abs(slope - 2) <= 0.1 and max(fac) <= 0.9)


def _virial_check(cfg, model, art):
    import numpy as np
    from .evolution import EvolveControls
    from .modulation import scaled_profile, virial_sample
    from .spectral import solve_trichotomy
    from .threshold import build_threshold_orbit
    M = model.M
    rows, worst_A = [], 0.0
    W = scaled_profile(model, 0.0, 1.0)  # closed-form samples; W_h differs by O(h^4)
    for R in cfg.radii:
        vs = virial_sample(model, W, R)
        rows.append((R, vs.A_R / M, vs.dttV_R / M))
        worst_A = max(worst_A, abs(vs.A_R) / M)
    art.csv("virial_W.csv", ["R", "A_R_over_M", "dttV_over_M"], rows)

    def obs(state):
        vs = virial_sample(model, state.phi, cfg.R)
        return {"VR": vs.V_R, "dtVR": vs.dtV_R, "dttVR": vs.dttV_R}
    if cfg.datum == "blowup":
        from .evolution import evolve, make_state
        _, u0 = make_datum(cfg, model)
        ctl = EvolveControls(dt_max=cfg.dt_max, sample_dt=cfg.sample_dt, method=cfg.method)
        rec = evolve(make_state(model, u0), cfg.t_end, ctl, observers=(obs,), model=model)
    else:
        tr = solve_trichotomy(model.params, model.grid, model)
        ctl = EvolveControls(dt_max=cfg.dt_max, sample_dt=cfg.sample_dt, method=cfg.method)
        rec, _ = build_threshold_orbit(tr, "minus", cfg.eps, cfg.t_end, ctl, (obs,))
    cmp_ = second_difference_check(rec, cfg.resolved, identity_floor(model, cfg.R))
    art.csv("virial_fd.csv", ["t", "dttV_identity", "dttV_fd", "rel_err"],
            zip(cmp_["t"], cmp_["identity"], cmp_["fd"], cmp_["rel"]))
    E = rec.array("E")
    rep = {"status": rec.status, "A_R_W_max_over_M": worst_A, "fd_points": int(cmp_["rel"].size),
           "fd_rel_max": float(cmp_["rel"].max()) if cmp_["rel"].size else float("nan"),
           "energy_minus_EW_over_M": float((E[0] - M / 3) / M), "resolved_cut": cmp_["cut"]}
    if rec.status == "failed" or cmp_["rel"].size == 0:
        return rep, None
    return rep, bool(worst_A <= 1e-8 and rep["fd_rel_max"] <= 1e-4)


def identity_floor(model, R, factor=1e5):
    """Smallest |dtt V_R| treated as resolved.

    The discrete ground state is exactly stationary, so the identity value
    there is pure discretization offset; samples must exceed it by `factor`.
    """
    from .modulation import virial_sample
    return factor * abs(virial_sample(model, model.phi_h, R).dttV_R)


def second_difference_check(rec, resolved=1e-4, floor=0.0):
    """Five-point second difference of V_R against the identity value.

    Only uniformly spaced interior samples with |dtt V_R| above both
    resolved * M and `floor` are compared.
    """
    import numpy as np
    t, V, D = rec.array("t"), rec.array("VR"), rec.array("dttVR")
    M = rec.meta["M"]
    cut = max(resolved * M, floor)
    h = np.diff(t)
    step = np.median(h)
    good = np.abs(h - step) <= 1e-9 * step
    out_t, out_i, out_f = [], [], []
    for j in range(2, t.size - 2):
        if not good[j - 2:j + 2].all() or abs(D[j]) < cut:
            continue
        fd = (-V[j + 2] + 16 * V[j + 1] - 30 * V[j] + 16 * V[j - 1] - V[j - 2]) / (12 * step ** 2)
        out_t.append(t[j])
        out_i.append(D[j])
        out_f.append(fd)
    ti, fi, ff = map(np.array, (out_t, out_i, out_f))
    return {"t": ti, "identity": fi, "fd": ff, "rel": np.abs(ff - fi) / np.maximum(np.abs(fi), 1e-300),
            "cut": cut}


def _evolve(cfg, model, art):
    import numpy as np
    from .evolution import EvolveControls, evolve, make_state
    from .modulation import modulation_observer
    ctl = EvolveControls(dt_max=cfg.dt_max, sample_dt=cfg.sample_dt, method=cfg.method)
    m, u0 = make_datum(cfg, model)
    rec = evolve(make_state(m, u0), cfg.t_end, ctl,
                 observers=(modulation_observer(m, R=cfg.R),), model=m)
    art.raw_csv("orbit.csv", rec.to_csv())
    E = rec.array("E")
    rep = {"status": rec.status, "reason": rec.reason, "t_final": float(rec.array("t")[-1]),
           "energy_drift": float(np.max(np.abs(E - E[0]))), "samples": len(rec)}
    if rec.status == "failed":
        return rep, None
    return rep, True


RUNNERS = {"spectrum": _spectrum, "orbit": _orbit, "classify": _classify,
           "lp-sweep": _lp_sweep, "virial-check": _virial_check, "evolve": _evolve}


def run_scenario(cfg, out_root=None):
    """Execute one scenario; returns a RunResult with the exit code and artifact paths."""
    from .grid import ConfigurationError
    from .modulation import FitUnavailable
    from .spectral import SpectralError
    from .threshold import ContractionFailure
    root = out_root or cfg.out or os.environ.get(OUT_ENV) or "hardy_nls_runs"
    t0 = time.time()
    P, g, model = _setup(cfg)
    art = _Artifacts(cfg, root, g.fingerprint())
    art.config()
    try:
        rep, ok = RUNNERS[cfg.kind](cfg, model, art)
    except (SpectralError, ContractionFailure, FitUnavailable, RuntimeError,
            ConfigurationError, FloatingPointError, ArithmeticError) as exc:
        rep, ok = {"error": f"{type(exc).__name__}: {exc}"}, None
    if ok is None:
        code, status = EXIT_NUMERICAL, "numerical-failure"
    elif ok == "undecided":
        code, status = EXIT_UNDECIDED, "undecided"
    elif ok:
        code, status = EXIT_OK, "ok"
    else:
        code, status = EXIT_PROPERTY, "property-failure"
    rep = {"kind": cfg.kind, "outcome": status, **rep}
    art.report(rep)
    art.meta(time.time() - t0)
    return RunResult(code, status, rep, art.paths, art.dir)


def _run_one(args):
    cfg, out = args
    res = run_scenario(cfg, out)
    return res.exit_code, res.status, res.directory


def _set_threads(k):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(k)


def main(argv=None):
    ap = argparse.ArgumentParser(prog="hardy-nls", description="Threshold dynamics laboratory runner.")
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--config", action="append", default=[], help="key = value config file (repeatable)")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    ap.add_argument("--out", default=None, help=f"output root (default ${OUT_ENV} or ./hardy_nls_runs)")
    ap.add_argument("--threads", type=int, default=None, help="BLAS threads per scenario")
    ap.add_argument("--jobs", type=int, default=1, help="scenarios run concurrently")
    args = ap.parse_args(argv)
    if args.threads:
        _set_threads(args.threads)
    texts = []
    for path in args.config or [None]:
        if path is None:
            texts.append("")
            continue
        try:
            with open(path) as fh:
                texts.append(fh.read())
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    cfgs = []
    for text in texts:
        try:
            cfg = parse_config(text, [f"kind={args.kind}"] + args.set)
        except ConfigError as exc:
            for e in exc.errors:
                print(f"config error: {e}", file=sys.stderr)
            return EXIT_USAGE
        cfgs.append(cfg)
    jobs = [(c, args.out) for c in cfgs]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    for code, status, d in results:
        print(f"{status}\t{d}")
    return max(code for code, _, _ in results)


if __name__ == "__main__":
    sys.exit(main())

"""Empirical-characteristic-function checks of fixed points, tail indices and
martingale diagnostics."""
from dataclasses import dataclass, field
import math
from typing import Callable, Optional

import numpy as np

from . import rng as _rng
from .branching import BranchingConfig, simulate_replicas
from .errors import DomainError
from .stable_laws import StableSpec, psi_eval, sample_YW
from .weight_models import expected_Z1, m_eval, sample_Z1

N_BOOT = 500
THRESHOLD_FLOOR = 1.0  # a studentized gap below 1 is never evidence


# ------------------------------------------------------------------ grids


def standard_grid(d, scale=1.0, seed=0, n_radial=10, n_dir=10, direction=None, lo=0.05, hi=2.0):
    """Radial log ladder along a fixed direction plus random directions at |x| = scale."""
    e = np.ones(d) / math.sqrt(d) if direction is None else np.asarray(direction, float)
    e = e / np.linalg.norm(e)
    rad = scale * np.geomspace(lo, hi, n_radial)[:, None] * e[None, :]
    G = _rng.generator(seed, 11).normal(size=(n_dir, d))
    G = scale * G / np.linalg.norm(G, axis=1, keepdims=True)
    return np.concatenate([rad, G], axis=0)


@dataclass
class ECFGrid:
    grid: np.ndarray  # (k, d)
    ecf: np.ndarray  # (k,) complex
    se: np.ndarray  # (k,)
    n: int
    _E: Optional[np.ndarray] = field(default=None, repr=False)

    def as_rows(self):
        return [{"x": x.tolist(), "re": float(v.real), "im": float(v.imag), "se": float(s)}
                for x, v, s in zip(self.grid, self.ecf, self.se)]


def ecf(samples, grid, keep=True):
    """Empirical CF on the grid with plug-in standard errors of the complex mean."""
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    if X.shape[0] == 1 and X.shape[1] != np.shape(grid)[1]:
        X = X.T
    G = np.atleast_2d(np.asarray(grid, dtype=float))
    n = X.shape[0]
    if n < 2:
        raise DomainError("need at least two samples")
    ph = X @ G.T
    E = np.exp(1j * ph)
    m = E.mean(axis=0)
    zero = np.all(G == 0, axis=1)
    m[zero] = 1.0
    var = np.mean(np.abs(E - m[None, :]) ** 2, axis=0) * n / (n - 1)
    se = np.sqrt(var / n)
    return ECFGrid(G, m, se, n, E if keep else None)


def _boot_weights(seed, B, n):
    # Poisson(1) multiplier bootstrap
    return _rng.generator(seed, 0xB0075).poisson(1.0, size=(B, n)).astype(float)


def _boot_dev(E, m, seed, B, chunk=50):
    n = E.shape[0]
    out = np.empty((B, E.shape[1]), complex)
    for s in range(0, B, chunk):
        w = _boot_weights(seed + s, min(chunk, B - s), n)
        tot = w.sum(axis=1, keepdims=True)
        out[s:s + len(w)] = (w @ E) / np.maximum(tot, 1.0) - m[None, :]
    return out


@dataclass
class TestVerdict:
    statistic: float
    threshold: float
    passed: bool
    level: float
    n: int
    table: list
    notes: dict = field(default_factory=dict)

    def to_dict(self):
        return {"statistic": self.statistic, "threshold": self.threshold, "pass": self.passed,
                "level": self.level, "n": self.n, "grid": self.table, "notes": self.notes}


def one_sample_test(samples, target_cf, grid, level=0.01, seed=0, B=N_BOOT):
    """Max studentized |ECF - phi| against its bootstrap null distribution."""
    g = ecf(samples, grid)
    phi = np.asarray(target_cf, dtype=complex)
    se = np.maximum(g.se, 1.0 / g.n)  # resolution floor for (near) point masses
    stat_pt = np.abs(g.ecf - phi) / se
    dev = _boot_dev(g._E, g.ecf, seed, B)
    null = np.max(np.abs(dev) / se[None, :], axis=1)
    thr = max(float(np.quantile(null, 1 - level)), THRESHOLD_FLOOR)
    stat = float(stat_pt.max())
    table = [{"x": x.tolist(), "ecf_re": float(e.real), "ecf_im": float(e.imag), "target_re": float(p.real),
              "target_im": float(p.imag), "se": float(s), "z": float(z)}
             for x, e, p, s, z in zip(g.grid, g.ecf, phi, g.se, stat_pt)]
    return TestVerdict(stat, thr, stat <= thr, level, g.n, table)


def two_sample_test(a, b, grid, level=0.01, seed=0, B=N_BOOT):
    ga, gb = ecf(a, grid), ecf(b, grid)
    se = np.maximum(np.sqrt(ga.se ** 2 + gb.se ** 2), 1.0 / min(ga.n, gb.n))
    stat_pt = np.abs(ga.ecf - gb.ecf) / se
    da = _boot_dev(ga._E, ga.ecf, seed, B)
    db = _boot_dev(gb._E, gb.ecf, seed + 7919, B)
    null = np.max(np.abs(da - db) / se[None, :], axis=1)
    thr = max(float(np.quantile(null, 1 - level)), THRESHOLD_FLOOR)
    stat = float(stat_pt.max())
    table = [{"x": x.tolist(), "lhs_re": float(u.real), "lhs_im": float(u.imag), "rhs_re": float(v.real),
              "rhs_im": float(v.imag), "se": float(s), "z": float(z)}
             for x, u, v, s, z in zip(ga.grid, ga.ecf, gb.ecf, se, stat_pt)]
    return TestVerdict(stat, thr, stat <= thr, level, min(ga.n, gb.n), table)


def sampler_check(spec, n=100_000, grid=None, level=0.01, seed=0, t=1.0, **kw):
    """ECF of sample_Y draws against exp(t Psi)."""
    from .stable_laws import sample_Y

    if grid is None:
        grid = standard_grid(spec.dim, seed=seed)
    Y = sample_Y(spec, t, seed, n, **kw)
    phi = np.exp(t * np.atleast_1d(psi_eval(spec, grid)))
    return one_sample_test(Y, phi, grid, level, seed + 1)


# -------------------------------------------------------------- samplers


class SolutionSampler:
    """Draws of W*_n + Y_{W_n} + Z_n w (a Z_n in the complex encoding).

    Every call runs fresh trees; the tree and Y streams are split from the
    same root seed by different tags, so Y is independent of (W*, W, Z).
    dependent_y=True breaks that on purpose (positive control).
    """

    def __init__(self, model, alpha, spec=None, a_or_w=None, cfg=None, seed=0, dependent_y=False):
        self.model = model
        self.alpha = float(alpha)
        self.spec = spec
        self.a_or_w = a_or_w
        self.cfg = cfg or BranchingConfig(max_depth=8)
        self.seed = int(seed)
        self.dependent_y = dependent_y
        self.calls = 0

    def __call__(self, m, seed=None):
        s = self.seed if seed is None else int(seed)
        tree_seed = int(_rng.root_key(s, 1)[0] >> np.uint64(1))
        y_seed = int(_rng.root_key(s, 2)[0] >> np.uint64(1))
        self.calls += 1
        cfg = BranchingConfig(max_depth=self.cfg.max_depth, level=self.cfg.level, max_nodes=self.cfg.max_nodes,
                              seed=tree_seed, prune=self.cfg.prune, eps_prune=self.cfg.eps_prune,
                              chunk=self.cfg.chunk, block=self.cfg.block, threads=self.cfg.threads)
        d = self.model.dim
        need_tree = True
        if self.spec is None or self.spec.payload.kind == "zero":
            if self.model.homogeneous and self.a_or_w is None:
                need_tree = False
        if not need_tree:
            return np.zeros((m, d))
        b = simulate_replicas(self.model, self.alpha, cfg, m)
        X = np.array(b.Wstar, dtype=float, copy=True)
        Zp = None
        if self.a_or_w is not None:
            aw = self.a_or_w
            if self.model.is_complex and np.ndim(aw) == 0:
                z = complex(aw) * b.Zc
                Zp = np.stack([z.real, z.imag], axis=1)
            else:
                Zp = b.Zw(np.asarray(aw, dtype=float))
            X += Zp
        if self.spec is not None and self.spec.payload.kind != "zero":
            Y = sample_YW(self.spec, np.maximum(b.W, 1e-300), y_seed)
            if self.dependent_y:
                # positive control: Y keeps its norm but points along the tree's Z w (or W*)
                ref = Zp if Zp is not None else b.Wstar
                nr = np.linalg.norm(ref, axis=1, keepdims=True)
                if not np.any(nr > 0):
                    raise DomainError("dependent-Y control needs a nonzero Z or W* part")
                Y = np.linalg.norm(Y, axis=1, keepdims=True) * ref / np.where(nr > 0, nr, 1.0)
            X += Y
        return X


def solution_sampler(model, alpha, spec, a_or_w, cfg, seed, dependent_y=False):
    return SolutionSampler(model, alpha, spec, a_or_w, cfg, seed, dependent_y)


def smoothing_rhs(model, X_copies_fn, n, seed, N_cap=1000, fresh_copies=True):
    """n draws of sum_j T_j X_j + C with child copies from X_copies_fn(m, seed).

    Returns (samples, cap_hits).  Families with more than N_cap children are
    dropped and counted.
    """
    fb = model.sample_batch(seed, n)
    cnt = fb.count.astype(int)
    hits = cnt > N_cap
    keep = ~hits
    M = fb.matrices()  # (n, W, d, d)
    present = fb.scale > 0
    present &= keep[:, None]
    owner, slot = np.nonzero(present)
    total = len(owner)
    d = model.dim
    if fresh_copies:
        Xc = np.asarray(X_copies_fn(total, seed + 1), dtype=float).reshape(total, d)
    else:
        # positive control: every child of a family reuses one copy
        one = np.asarray(X_copies_fn(n, seed + 1), dtype=float).reshape(n, d)
        Xc = one[owner]
    TX = np.einsum("kij,kj->ki", M[owner, slot], Xc)
    out = np.array(fb.C, dtype=float, copy=True)
    for i in range(d):
        out[:, i] += np.bincount(owner, weights=TX[:, i], minlength=n)
    return out[keep], int(hits.sum())


def fixed_point_test(model, sampler, grid=None, n=10_000, level=0.01, seed=0, N_cap=1000, scale=1.0,
                     fresh_copies=True):
    """One-step fixed-point test: law of X vs law of sum_j T_j X_j + C."""
    if n < 10_000:
        raise DomainError("fixed_point_test needs n >= 1e4")
    d = model.dim
    if grid is None:
        grid = standard_grid(d, scale=scale, seed=seed)
    s_lhs, s_rhs = 2 * seed + 101, 2 * seed + 202
    X = np.asarray(sampler(n, s_lhs), dtype=float).reshape(n, d)
    R, hits = smoothing_rhs(model, sampler, n, s_rhs, N_cap, fresh_copies)
    v = two_sample_test(X, R, grid, level, seed + 3)
    v.notes["cap_hits"] = hits
    return v


# ------------------------------------------------------------------ tails


@dataclass
class HillResult:
    alpha: float
    se: float
    k: int
    sweep_k: np.ndarray
    sweep_alpha: np.ndarray
    plateau: float

    def to_dict(self):
        return {"alpha": self.alpha, "se": self.se, "k": self.k, "plateau": self.plateau,
                "sweep": [{"k": int(k), "alpha": float(a)} for k, a in zip(self.sweep_k, self.sweep_alpha)]}


def _hill_sorted(xs, k):
    # xs: |samples| sorted descending; log-ratios to the (k+1)-th order statistic
    return 1.0 / np.mean(np.log(xs[:k] / xs[k]))


def hill_tail_index(samples, k=None, sweep=None):
    """Hill estimator of the tail index from the top-k order statistics of |samples|.

    The plateau is the median of the estimates over the k-sweep (default
    log-spaced between 10 and n/10).
    """
    x = np.abs(np.asarray(samples, dtype=float).ravel())
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise DomainError("samples must be finite and nonzero")
    n = len(x)
    if k is None:
        k = max(10, min(n // 10, int(round(n ** 0.6))))
    if not 10 <= k <= n // 10:
        raise DomainError(f"k must lie in [10, n/10], got {k} for n = {n}")
    xs = np.sort(x)[::-1]
    a = float(_hill_sorted(xs, k))
    if sweep is None:
        sweep = np.unique(np.geomspace(10, n // 10, 25).astype(int))
    sa = np.array([_hill_sorted(xs, int(kk)) for kk in sweep])
    return HillResult(a, a / math.sqrt(k), int(k), np.asarray(sweep), sa, float(np.median(sa)))


def hill_plateau(samples, k_lo, k_hi, n_k=15):
    x = np.abs(np.asarray(samples, dtype=float).ravel())
    xs = np.sort(x)[::-1]
    ks = np.unique(np.geomspace(k_lo, k_hi, n_k).astype(int))
    est = np.array([_hill_sorted(xs, int(k)) for k in ks])
    return float(np.median(est)), ks, est


# ----------------------------------------------------- eigen / martingales


@dataclass
class EigenCheck:
    w: np.ndarray
    eigenvalue: complex
    residual: float
    violation_rate: float
    n_checked: int

    def to_dict(self):
        return {"w": self.w.tolist(), "eigenvalue": [self.eigenvalue.real, self.eigenvalue.imag],
                "residual": self.residual, "as_violation_rate": self.violation_rate, "n": self.n_checked}


def eigen_check(model, n_mc=100_000, tol=None, seed=0, as_tol=1e-9):
    """Unit eigenvector of E[Z_1] for the eigenvalue nearest 1, or None."""
    EZ, se = expected_Z1(model, n_mc, seed)
    analytic = model.analytic_EZ1 is not None
    lam, V = np.linalg.eig(EZ)
    i = int(np.argmin(np.abs(lam - 1.0)))
    if tol is None:
        tol = 1e-6 if analytic else 3.0 * max(float(np.max(se)), 1e-12) * math.sqrt(model.dim)
    if abs(lam[i] - 1.0) > tol:
        return None
    w = np.real(V[:, i])
    if np.linalg.norm(w) < 1e-12:
        w = np.imag(V[:, i])
    w = w / np.linalg.norm(w)
    if w[np.argmax(np.abs(w))] < 0:
        w = -w
    res = float(np.linalg.norm(EZ @ w - w))
    nchk = min(n_mc, 20_000)
    Z = sample_Z1(model, nchk, seed + 1)
    viol = np.linalg.norm(np.einsum("kij,j->ki", Z, w) - w[None, :], axis=1) > as_tol
    return EigenCheck(w, complex(lam[i]), res, float(viol.mean()), nchk)


def martingale_report(model, alpha, depths, betas=(2.0,), replicas=10_000, seed=0, w=None, n_mc=100_000):
    """Per depth: mean W_n, mean Z_n w, empirical E|Z_n w|^beta (with std errors)."""
    depths = sorted(int(x) for x in depths)
    if any(b <= 1 or b > 2 for b in betas):
        raise DomainError("betas must lie in (1, 2]")
    if w is None:
        ec = eigen_check(model, n_mc, seed=seed)
        w = ec.w if ec is not None else None
    cfg = BranchingConfig(max_depth=depths[-1], seed=seed)
    b = simulate_replicas(model, alpha, cfg, replicas)
    R = replicas
    rows = []
    for n in depths:
        Wn = b.W_by_depth[:, n]
        row = {"depth": n, "W_mean": float(Wn.mean()), "W_se": float(Wn.std(ddof=1) / math.sqrt(R))}
        if w is not None:
            Zw = np.einsum("rij,j->ri", b.Z_by_depth[:, n], w)
            row["Zw_mean"] = Zw.mean(axis=0).tolist()
            row["Zw_se"] = (Zw.std(axis=0, ddof=1) / math.sqrt(R)).tolist()
            nz = np.linalg.norm(Zw, axis=1)
            for be in betas:
                v = nz ** be
                row[f"E|Zw|^{be:g}"] = float(v.mean())
                row[f"E|Zw|^{be:g}_se"] = float(v.std(ddof=1) / math.sqrt(R))
        rows.append(row)
    suff = []
    fb = model.sample_batch(seed + 99, n_mc)
    for be in betas:
        mb, mse = m_eval(model, be, n_mc, seed + 5)
        entry = {"beta": be, "m": float(mb), "m_se": float(mse)}
        if w is not None:
            Z1w = np.einsum("kij,j->ki", fb.matrices().sum(axis=1), w)
            v = np.linalg.norm(Z1w, axis=1) ** be
            entry["E|Z1w|^beta"] = float(v.mean())
            entry["E|Z1w|^beta_se"] = float(v.std(ddof=1) / math.sqrt(n_mc))
            entry["sufficient"] = bool(mb < 1 and np.isfinite(v.mean()))
        suff.append(entry)
        if w is not None and len(rows) >= 2:
            key = f"E|Zw|^{be:g}"
            vals = np.array([r[key] for r in rows])
            growth = bool(vals[-1] > vals[0] * 1.5 and np.all(np.diff(vals) > 0))
            entry["norm_growth"] = growth
    return {"rows": rows, "sufficient": suff, "w": None if w is None else np.asarray(w).tolist()}

"""Weight families (C, T_1, ..., T_N), presets and the mean functional m(s).

Families are drawn in batches: one family per node key, so a tree engine can
expand thousands of nodes with a single call.  The d = 2 presets built from a
complex number carry their rotations as unit complex numbers.
"""
from dataclasses import dataclass, field
import math
from typing import Callable, Optional

import numpy as np
from scipy import optimize, special, stats

from . import rng
from .char_roots import DirichletPsi, SamplePsi, lambda2, psi_lambda2
from .errors import DomainError
from .similarity import (
    GroupDescriptor,
    Q_from_complex,
    Similarity,
    continuous_group,
    isotropic_group,
    rotation2,
)


@dataclass
class FamilyBatch:
    """K families padded to M children; scale == 0 marks an absent child."""

    count: np.ndarray  # (K,)
    scale: np.ndarray  # (K, M)
    C: np.ndarray  # (K, d)
    unit: Optional[np.ndarray] = None  # (K, M) complex, d = 2 rotations
    rot: Optional[np.ndarray] = None  # (K, M, d, d)

    @property
    def size(self):
        return self.count.shape[0]

    @property
    def width(self):
        return self.scale.shape[1]

    def rotations(self):
        if self.rot is not None:
            return self.rot
        c, s = self.unit.real, self.unit.imag
        return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)

    def matrices(self):
        return self.scale[..., None, None] * self.rotations()

    def complex_weights(self):
        if self.unit is None:
            raise DomainError("family has no complex encoding")
        return self.scale * self.unit


@dataclass(frozen=True)
class WeightSample:
    C: np.ndarray
    T: tuple

    @property
    def N(self):
        return len(self.T)


@dataclass(eq=False)
class WeightModel:
    dim: int
    group: GroupDescriptor
    draw: Callable  # keys (K, 2) uint64 -> FamilyBatch
    max_children: int
    label: str = "model"
    analytic_m: Optional[Callable] = None
    analytic_EZ1: Optional[np.ndarray] = None
    is_complex: bool = False
    homogeneous: bool = True
    psi: object = None
    lambda2: Optional[complex] = None
    params: dict = field(default_factory=dict)
    alpha_hint: Optional[float] = None
    deterministic: bool = False  # family law is a point mass

    def families(self, keys):
        return self.draw(np.asarray(keys, dtype=np.uint64).reshape(-1, 2))

    def sample_batch(self, seed, n, offset=0):
        return self.families(rng.root_keys(seed, n, offset))

    def sample(self, seed):
        """One family as a WeightSample."""
        fb = self.families(rng.root_key(seed)[None, :])
        k = int(fb.count[0])
        R = fb.rotations()[0]
        T = tuple(Similarity(float(fb.scale[0, j]), R[j]) for j in range(fb.width) if fb.scale[0, j] > 0)
        assert len(T) == k
        return WeightSample(fb.C[0].copy(), T)


# ------------------------------------------------------------------ helpers


def _unit_from_log(theta):
    out = np.empty(np.shape(theta), complex)
    out.real = np.cos(theta)
    out.imag = np.sin(theta)
    return out


def _spacings(u):
    """Spacings of the rows of u in (0, 1); u is (K, b-1)."""
    s = np.sort(u, axis=1)
    K = s.shape[0]
    full = np.concatenate([np.zeros((K, 1)), s, np.ones((K, 1))], axis=1)
    return np.maximum(np.diff(full, axis=1), 1e-300)


def _complex_power_family(V, lam):
    # T_j = V_j^lam  for lam complex
    lv = np.log(V)
    return np.exp(lam.real * lv), _unit_from_log(lam.imag * lv)


def _zero_C(K, d):
    return np.zeros((K, d))


def _snail_group(lam, gens=()):
    return continuous_group(Q_from_complex(lam), compact_generators=gens)


def bary_m(b, re_l2):
    lf = math.lgamma(b + 1)

    def m(s):
        s = np.asarray(s, dtype=float)
        x = re_l2 * s
        return np.exp(lf - np.sum(np.log(x[..., None] + np.arange(1, b)), axis=-1))

    return m


# ------------------------------------------------------------------ presets


def bary_spacings(b=27):
    """X = sum_j V_j^{lambda2} X_j with uniform spacings of b - 1 uniforms."""
    if int(b) != b or b < 4:
        raise DomainError("bary presets need an integer b >= 4")
    b = int(b)
    lam = lambda2(b)

    def draw(keys):
        K = keys.shape[0]
        V = _spacings(rng.uniforms(keys, b - 1))
        sc, un = _complex_power_family(V, lam)
        return FamilyBatch(np.full(K, b), sc, _zero_C(K, 2), unit=un)

    return WeightModel(2, _snail_group(lam), draw, b, f"bary_spacings(b={b})", bary_m(b, lam.real),
                       np.eye(2), True, True, DirichletPsi(b, 1.0), lam, {"b": b}, 1.0 / lam.real)


def bary_exponential(b=27):
    """X = exp(-lambda2 T)(X_1 + ... + X_b), T = sum_{j<b} Exp(rate j)."""
    if int(b) != b or b < 4:
        raise DomainError("bary presets need an integer b >= 4")
    b = int(b)
    lam = lambda2(b)
    rates = np.arange(1, b, dtype=float)

    def draw(keys):
        K = keys.shape[0]
        T = np.sum(-np.log(rng.uniforms(keys, b - 1)) / rates, axis=1)
        sc = np.repeat(np.exp(-lam.real * T)[:, None], b, axis=1)
        un = np.repeat(_unit_from_log(-lam.imag * T)[:, None], b, axis=1)
        return FamilyBatch(np.full(K, b), sc, _zero_C(K, 2), unit=un)

    return WeightModel(2, _snail_group(lam), draw, b, f"bary_exponential(b={b})", bary_m(b, lam.real),
                       np.eye(2), True, True, None, lam, {"b": b}, 1.0 / lam.real)


def cyclic_polya(b=7):
    """X = U^zeta X_1 + zeta (1-U)^zeta X_2, zeta = exp(2 pi i / b)."""
    if int(b) != b or b < 3:
        raise DomainError("cyclic_polya needs an integer b >= 3")
    b = int(b)
    zeta = complex(math.cos(2 * math.pi / b), math.sin(2 * math.pi / b))
    xi = zeta.real
    if xi <= 0:
        raise DomainError(f"cyclic_polya(b={b}) has cos(2 pi/b) <= 0: m(s) never reaches 1")

    def draw(keys):
        K = keys.shape[0]
        u = rng.uniforms(keys, 1)[:, 0]
        V = np.stack([u, 1.0 - u], axis=1)
        sc, un = _complex_power_family(V, zeta)
        un[:, 1] *= zeta
        return FamilyBatch(np.full(K, 2), sc, _zero_C(K, 2), unit=un)

    def m(s):
        return 2.0 / (1.0 + xi * np.asarray(s, dtype=float))

    g = _snail_group(zeta, gens=(rotation2(2 * math.pi / b),))
    return WeightModel(2, g, draw, 2, f"cyclic_polya(b={b})", m, np.eye(2), True, True, None, zeta,
                       {"b": b, "xi": xi}, 1.0 / xi)


def fragmentation(b=27, a=1.0, spacing_sampler=None, psi_sample_size=20000, start=None):
    """X = sum_j V_j^{lambda2} X_j with (V_1..V_b) ~ Dirichlet(a, ..., a).

    spacing_sampler: optional callable (uniforms of shape (K, n_u)) -> (K, b)
    positive spacings summing to one, together with n_u as attribute
    `n_uniforms`.  psi is then estimated from a fixed sample (experimental).
    """
    b = int(b)
    if b < 2:
        raise DomainError("fragmentation needs b >= 2")
    if spacing_sampler is None:
        if a <= 0:
            raise DomainError("Dirichlet parameter must be positive")
        psi = DirichletPsi(b, a)
        lam = psi_lambda2(psi) if b >= 3 or a != 1 else None
        a = float(a)

        def spacings(keys):
            u = rng.uniforms(keys, b)
            g = -np.log(u) if a == 1.0 else special.gammaincinv(a, u)
            g = np.maximum(g, 1e-300)
            return g / g.sum(axis=1, keepdims=True)
    else:
        n_u = int(getattr(spacing_sampler, "n_uniforms", b))

        def spacings(keys):
            return np.asarray(spacing_sampler(rng.uniforms(keys, n_u)), dtype=float)

        psi = SamplePsi(spacings(rng.root_keys(0x5A5A, psi_sample_size)))
        if start is None:
            start = lambda2(max(b, 4)) if b >= 4 else 0.5 + 1j
        lam = psi_lambda2(psi, start=start)
    if lam is None or lam.real <= 0:
        raise DomainError(f"no usable second root of psi(z) = 1 (got {lam})")
    re = lam.real

    def draw(keys):
        K = keys.shape[0]
        sc, un = _complex_power_family(spacings(keys), lam)
        return FamilyBatch(np.full(K, b), sc, _zero_C(K, 2), unit=un)

    def m(s):
        return np.real(psi(re * np.asarray(s, dtype=float)))

    return WeightModel(2, _snail_group(lam), draw, b, f"fragmentation(b={b},a={a})", m, np.eye(2), True,
                       True, psi, lam, {"b": b, "a": a}, 1.0 / re)


def biggins_brw(gamma=0.7, beta=None, mean=None, var=None, offspring="binary", poisson_mean=2.0):
    """Complex Biggins martingale: T_j = exp(-gamma S_j + i beta sqrt(2 ln 2) S'_j) / mm.

    Displacements S ~ N(mean, var) (default mean = var = 2 ln 2), S' ~ N(0, 1),
    binary or Poisson offspring; mm is the real mean of the unnormalized sum.
    beta defaults to 1 - gamma, the case with m(s) = exp((s gamma - 1)^2 ln 2),
    where m'(alpha) = 0 and A3 fails.
    """
    ln2 = math.log(2.0)
    beta = 1.0 - gamma if beta is None else float(beta)
    mean = 2 * ln2 if mean is None else float(mean)
    var = 2 * ln2 if var is None else float(var)
    if gamma <= 0 or var < 0:
        raise DomainError("need gamma > 0 and var >= 0")
    k = beta * math.sqrt(2 * ln2)
    if offspring == "binary":
        EN, M = 2.0, 2
    elif offspring == "poisson":
        EN = float(poisson_mean)
        M = int(stats.poisson.ppf(1 - 1e-12, EN)) + 1
    else:
        raise DomainError(f"unknown offspring law {offspring!r}")
    mm = EN * math.exp(-gamma * mean + gamma ** 2 * var / 2 - k ** 2 / 2)
    sd = math.sqrt(var)

    def draw(keys):
        K = keys.shape[0]
        z = rng.normals(keys, 2 * M)
        S = mean + sd * z[:, :M]
        S2 = z[:, M:]
        sc = np.exp(-gamma * S) / mm
        un = _unit_from_log(k * S2)
        if offspring == "binary":
            cnt = np.full(K, 2)
        else:
            u = rng.uniforms(keys, 1, start=4 * M)[:, 0]
            cnt = np.minimum(stats.poisson.ppf(u, EN).astype(int), M)
            sc = np.where(np.arange(M)[None, :] < cnt[:, None], sc, 0.0)
        return FamilyBatch(cnt, sc, _zero_C(K, 2), unit=un)

    def m(s):
        s = np.asarray(s, dtype=float)
        return EN * np.exp(-s * gamma * mean + s ** 2 * gamma ** 2 * var / 2) / mm ** s

    return WeightModel(2, isotropic_group(2), draw, M, f"biggins_brw(gamma={gamma},beta={beta})", m, np.eye(2),
                       True, True, None, None, {"gamma": gamma, "beta": beta, "mean": mean, "var": var,
                                                "offspring": offspring})


def _quat_rot(q):
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
        np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
        np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
    ], -2)


def _axis_angle(axis, phi):
    # rotation by phi about unit axes (K, 3)
    K = np.zeros(axis.shape[:-1] + (3, 3))
    a0, a1, a2 = np.moveaxis(axis, -1, 0)
    K[..., 0, 1], K[..., 0, 2], K[..., 1, 2] = -a2, a1, -a0
    K[..., 1, 0], K[..., 2, 0], K[..., 2, 1] = a2, -a1, a0
    s, c = np.sin(phi)[..., None, None], np.cos(phi)[..., None, None]
    return np.eye(3) + s * K + (1 - c) * (K @ K)


def _rotate_to(w, v):
    """Rotations taking the fixed unit vector w to the unit vectors v (K, 3)."""
    ax = np.cross(np.broadcast_to(w, v.shape), v)
    sn = np.linalg.norm(ax, axis=-1)
    cs = v @ w
    ang = np.arctan2(sn, cs)
    perp = np.cross(w, [1.0, 0, 0]) if abs(w[0]) < 0.9 else np.cross(w, [0, 1.0, 0])
    perp = perp / np.linalg.norm(perp)
    ax = np.where(sn[:, None] > 1e-14, ax / np.maximum(sn, 1e-300)[:, None], perp)
    return _axis_angle(ax, ang)


def kac3d(momentum=False, w=(1.0, 0.0, 0.0)):
    """V = L V_1 + R V_2 in R^3 with |L| = |cos Theta|, |R| = |sin Theta|.

    Theta uniform on [0, 2 pi).  Rotations: independent Haar, or with
    momentum=True chosen so that L w + R w = w holds exactly.
    """
    w = np.asarray(w, dtype=float)
    w = w / np.linalg.norm(w)

    def draw(keys):
        K = keys.shape[0]
        th = 2 * math.pi * rng.uniforms(keys, 1)[:, 0]
        l, r = np.cos(th), np.sin(th)
        sc = np.stack([np.abs(l), np.abs(r)], axis=1)
        z = rng.normals(keys, 8, start=2)
        if not momentum:
            rot = np.stack([_quat_rot(z[:, :4]), _quat_rot(z[:, 4:])], axis=1)
        else:
            e = z[:, :3] - np.outer(z[:, :3] @ w, w)
            e /= np.linalg.norm(e, axis=1, keepdims=True)
            u = l[:, None] * w + r[:, None] * e
            u2 = r[:, None] * w - l[:, None] * e
            u *= np.where(l < 0, -1.0, 1.0)[:, None]
            u2 *= np.where(r < 0, -1.0, 1.0)[:, None]
            spin = 2 * math.pi * rng.uniforms(keys, 2, start=10)
            A = _rotate_to(w, u) @ _axis_angle(np.broadcast_to(w, (K, 3)), spin[:, 0])
            B = _rotate_to(w, u2) @ _axis_angle(np.broadcast_to(w, (K, 3)), spin[:, 1])
            rot = np.stack([A, B], axis=1)
        sc = np.maximum(sc, 1e-300)
        return FamilyBatch(np.full(K, 2), sc, _zero_C(K, 3), rot=rot)

    def m(s):
        s = np.asarray(s, dtype=float)
        return 2 * np.exp(special.gammaln((s + 1) / 2) - special.gammaln(s / 2 + 1)) / math.sqrt(math.pi)

    EZ1 = None if momentum else np.zeros((3, 3))
    return WeightModel(3, isotropic_group(3), draw, 2, f"kac3d(momentum={momentum})", m, EZ1, False, True,
                       None, None, {"momentum": momentum, "w": w.tolist()}, 2.0)


@dataclass(frozen=True)
class Atom:
    prob: float
    C: np.ndarray
    T: tuple


def table(atoms, group=None, dim=None):
    """Finite mixture of deterministic families.

    atoms: iterable of dicts {"prob", "C", "T": [Similarity or dict]} or Atom.
    The group defaults to the continuous group with Q = I generated by the
    atom rotations; pass `group` to declare it explicitly.
    """
    parsed = []
    for a in atoms:
        if isinstance(a, Atom):
            parsed.append(a)
            continue
        Ts = tuple(t if isinstance(t, Similarity) else Similarity.from_dict(t) for t in a.get("T", []))
        d = dim or (Ts[0].dim if Ts else len(np.atleast_1d(a.get("C", [0.0]))))
        C = np.atleast_1d(np.asarray(a.get("C", np.zeros(d)), dtype=float))
        if C.size == 1 and d > 1:
            C = np.full(d, float(C[0]))
        parsed.append(Atom(float(a.get("prob", 1.0)), C, Ts))
    if not parsed:
        raise DomainError("table needs at least one atom")
    p = np.array([a.prob for a in parsed])
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise DomainError("atom probabilities must be nonnegative and sum to 1")
    d = dim or next((a.T[0].dim for a in parsed if a.T), parsed[0].C.size)
    for a in parsed:
        if a.C.size != d or any(t.dim != d for t in a.T):
            raise DomainError("atom dimensions disagree")
    M = max(1, max(len(a.T) for a in parsed))
    nA = len(parsed)
    SC = np.zeros((nA, M))
    ROT = np.tile(np.eye(d), (nA, M, 1, 1))
    CC = np.stack([a.C for a in parsed])
    CNT = np.array([len(a.T) for a in parsed])
    for i, a in enumerate(parsed):
        for j, t in enumerate(a.T):
            SC[i, j] = t.scale
            ROT[i, j] = t.rotation
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    proper2 = d == 2 and all(np.linalg.det(t.rotation) > 0 for a in parsed for t in a.T)
    UN = ROT[..., 0, 0] + 1j * ROT[..., 1, 0] if proper2 else None

    def draw(keys):
        K = keys.shape[0]
        if nA == 1:
            idx = np.zeros(K, dtype=int)
        else:
            idx = np.searchsorted(cdf, rng.uniforms(keys, 1)[:, 0], side="right")
            idx = np.minimum(idx, nA - 1)
        return FamilyBatch(CNT[idx], SC[idx], CC[idx], unit=None if UN is None else UN[idx],
                           rot=None if UN is not None else ROT[idx])

    def m_scalar(s):
        with np.errstate(divide="ignore"):
            t = np.where(SC > 0, np.where(SC > 0, SC, 1.0) ** s, 0.0)
        return float(np.sum(p * t.sum(axis=1)))

    def m(s):
        if np.ndim(s) == 0:
            return m_scalar(float(s))
        return np.vectorize(m_scalar)(np.asarray(s, dtype=float))

    EZ1 = np.einsum("a,aj,ajkl->kl", p, SC, ROT)
    if group is None:
        gens = []
        for a in parsed:
            for t in a.T:
                if np.max(np.abs(t.rotation - np.eye(d))) > 1e-12:
                    gens.append(t.rotation)
        group = continuous_group(np.eye(d), compact_generators=gens)
    elif isinstance(group, dict):
        group = GroupDescriptor.from_dict(group)
    homo = all(np.all(a.C == 0) for a in parsed)
    return WeightModel(d, group, draw, M, "table", m, EZ1, proper2, homo, None, None,
                       {"atoms": [{"prob": a.prob, "C": a.C.tolist(), "T": [t.to_dict() for t in a.T]}
                                  for a in parsed]}, deterministic=bool(np.sum(p > 0) == 1))


PRESETS = {
    "bary_spacings": bary_spacings,
    "bary": bary_spacings,
    "bary_exponential": bary_exponential,
    "cyclic_polya": cyclic_polya,
    "fragmentation": fragmentation,
    "biggins_brw": biggins_brw,
    "kac3d": kac3d,
    "table": table,
}


def make_preset(name, params=None):
    params = dict(params or {})
    if name not in PRESETS:
        raise DomainError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    try:
        return PRESETS[name](**params)
    except TypeError as e:
        raise DomainError(f"invalid parameters for {name}: {e}") from None


def model_from_config(cfg):
    cfg = dict(cfg)
    name = cfg.pop("preset")
    return make_preset(name, cfg)


# ------------------------------------------------------------ m, alpha, checks


def _mc_sums(model, s, n_mc, seed):
    fb = model.sample_batch(seed, n_mc)
    with np.errstate(divide="ignore"):
        x = np.where(fb.scale > 0, fb.scale ** s, 0.0).sum(axis=1)
    return x


def m_eval(model, s, n_mc=100_000, seed=0, force_mc=False):
    """(estimate, std_error) of m(s) = E[sum_j |T_j|^s].

    The analytic form is used when the model has one (std_error 0).
    Returns (inf, nan) when the running mean more than doubles between n/2
    and n draws, the signature of an infinite mean.
    """
    if s < 0:
        raise DomainError("m(s) needs s >= 0")
    if model.analytic_m is not None and not force_mc:
        return float(model.analytic_m(s)), 0.0
    if n_mc < 1:
        raise DomainError("n_mc must be >= 1")
    x = _mc_sums(model, s, n_mc, seed)
    h = max(1, n_mc // 2)
    if n_mc >= 1000 and x.mean() > 2 * x[:h].mean():
        return math.inf, math.nan
    se = float(x.std(ddof=1) / math.sqrt(n_mc)) if n_mc > 1 else math.nan
    return float(x.mean()), se


def m_derivative(model, s, n_mc=100_000, seed=0, h=1e-6):
    """(m'(s), std_error); analytic models use a central difference."""
    if model.analytic_m is not None:
        f = model.analytic_m
        return float((f(s + h) - f(s - h)) / (2 * h)), 0.0
    fb = model.sample_batch(seed, n_mc)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(fb.scale > 0, fb.scale ** s * np.log(fb.scale), 0.0).sum(axis=1)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(n_mc))


@dataclass
class AlphaScan:
    alpha: Optional[float]
    sign_changes: list
    grid: np.ndarray
    values: np.ndarray
    tol: float


def scan_alpha(model, bracket=None, tol=None, n_mc=100_000, seed=0, s0=1.0, kmin=-12, kmax=8):
    """Locate the roots of m(s) = 1 and refine the smallest one.

    Without a bracket, s runs over the geometric ladder s0 * 2^(k/4); m may be
    non-monotone, so all sign changes are reported.
    """
    if model.analytic_m is not None:
        f = lambda s: float(model.analytic_m(s)) - 1.0
        tol = 1e-12 if tol is None else tol
        se_fn = None
    else:
        fb = model.sample_batch(seed, n_mc)
        ls = np.where(fb.scale > 0, np.log(np.where(fb.scale > 0, fb.scale, 1.0)), -np.inf)

        def msum(s):
            with np.errstate(invalid="ignore"):
                return np.where(np.isfinite(ls), np.exp(s * ls), 0.0).sum(axis=1)

        f = lambda s: float(msum(s).mean()) - 1.0
        se_fn = lambda s: float(msum(s).std(ddof=1) / math.sqrt(n_mc))
    if bracket is not None:
        grid = np.array([float(bracket[0]), float(bracket[1])])
    else:
        grid = s0 * 2.0 ** (np.arange(4 * kmin, 4 * kmax + 1) / 4.0)
    vals = np.array([f(s) for s in grid])
    changes = [(grid[i], grid[i + 1]) for i in range(len(grid) - 1)
               if np.isfinite(vals[i]) and np.isfinite(vals[i + 1]) and vals[i] * vals[i + 1] < 0]
    exact = [grid[i] for i in range(len(grid)) if vals[i] == 0]
    if not changes and not exact:
        return AlphaScan(None, [], grid, vals, tol if tol is not None else math.nan)
    if exact and (not changes or exact[0] <= changes[0][0]):
        alpha = float(exact[0])
    else:
        lo, hi = changes[0]
        alpha = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    if se_fn is not None:
        tol = 3 * se_fn(alpha) if tol is None else tol
    return AlphaScan(float(alpha), changes, grid, vals, tol)


def solve_alpha(model, bracket=None, tol=None, n_mc=100_000, seed=0):
    """alpha > 0 with m(alpha) = 1 (the smallest root found by the scan)."""
    sc = scan_alpha(model, bracket, tol, n_mc, seed)
    if sc.alpha is None:
        trace = ", ".join(f"m({s:.4g})-1={v:.3g}" for s, v in zip(sc.grid[::8], sc.values[::8]))
        raise DomainError(f"no sign change of m(s) - 1 found in the scan range: {trace}")
    return sc.alpha


def alpha_or_inf(model):
    """alpha, or +inf when m(s) > 1 on the whole scan range."""
    try:
        return solve_alpha(model)
    except DomainError:
        return math.inf


def h_r(x, r):
    """x (log+ x)^r log+ log+ x."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        lp = np.log(np.maximum(x, 1.0))
        llp = np.log(np.maximum(lp, 1.0))
    return x * lp ** r * llp


def _moment(x):
    n = len(x)
    m = float(np.mean(x))
    se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    h = n // 2
    grows = n >= 1000 and np.mean(x) > 2 * np.mean(x[:h]) + 1e-300
    return m, se, not grows


@dataclass
class AssumptionReport:
    alpha: float
    n_mc: int
    entries: dict

    def passed(self, name):
        return self.entries[name]["pass"]

    def to_dict(self):
        def conv(v):
            if isinstance(v, (np.floating, float)):
                return float(v)
            if isinstance(v, (np.bool_,)):
                return bool(v)
            return v
        return {"alpha": self.alpha, "n_mc": self.n_mc,
                "entries": {k: {kk: conv(vv) for kk, vv in e.items()} for k, e in self.entries.items()}}


def check_assumptions(model, alpha, n_mc=10_000, seed=0):
    """Finite-sample diagnostics for A1-A4' and the S1 condition.

    Finiteness of moments cannot be decided from samples; 'pass' for a moment
    means no divergence was detected at n_mc draws.
    """
    fb = model.sample_batch(seed, n_mc)
    sc = fb.scale
    pos = sc > 0
    E = {}
    N = fb.count.astype(float)
    mN, seN, _ = _moment(N)
    E["A1"] = {"quantity": "E[N]", "estimate": mN, "se": seN, "pass": bool(mN > 1 + 3 * seN) if mN > 0 else False}
    with np.errstate(divide="ignore", invalid="ignore"):
        W1 = np.where(pos, sc ** alpha, 0.0).sum(axis=1)
        dm = np.where(pos, sc ** alpha * np.log(np.where(pos, sc, 1.0)), 0.0).sum(axis=1)
    if model.analytic_m is not None:
        ma = float(model.analytic_m(alpha))
        E["A2"] = {"quantity": "m(alpha)", "estimate": ma, "se": 0.0, "pass": bool(abs(ma - 1) < 1e-9)}
        d, _ = m_derivative(model, alpha)
        E["A3_mprime"] = {"quantity": "m'(alpha)", "estimate": d, "se": 0.0, "pass": bool(d < -1e-9)}
    else:
        mw, sew, _ = _moment(W1)
        E["A2"] = {"quantity": "m(alpha)", "estimate": mw, "se": sew, "pass": bool(abs(mw - 1) < 4 * sew + 1e-12)}
        md, sed, _ = _moment(dm)
        E["A3_mprime"] = {"quantity": "m'(alpha)", "estimate": md, "se": sed, "pass": bool(md < -3 * sed)}
    with np.errstate(divide="ignore"):
        wl = W1 * np.log(np.maximum(W1, 1.0))
    m1, se1, fin1 = _moment(wl)
    E["A3_WlogW"] = {"quantity": "E[W1 log+ W1]", "estimate": m1, "se": se1, "pass": fin1,
                     "note": "no divergence detected at n_mc" if fin1 else "running mean grows"}
    for r in (1, 2, 3):
        mh, seh, finh = _moment(h_r(W1, r))
        E[f"h{r}"] = {"quantity": f"E[h_{r}(W1)]", "estimate": mh, "se": seh, "pass": finh,
                      "note": "no divergence detected at n_mc" if finh else "running mean grows"}
    E["A4prime"] = dict(E["h3"], quantity="E[h_3(W1)] (A4')")
    # S1: beta in (0, 1] with m(beta) < 1 and E|C|^beta finite
    Cn = np.linalg.norm(fb.C, axis=1)
    best = None
    if model.homogeneous:
        E["S1"] = {"quantity": "homogeneous (C = 0)", "estimate": 0.0, "se": 0.0, "pass": True, "beta": None}
    else:
        for beta in np.linspace(1.0, 0.05, 20):
            mb, seb = m_eval(model, beta, n_mc=n_mc, seed=seed + 1)
            cb, secb, finc = _moment(Cn ** beta)
            if mb + 3 * (seb if np.isfinite(seb) else 0) < 1 and finc:
                best = {"quantity": "m(beta) < 1, E|C|^beta", "estimate": mb, "se": seb, "beta": float(beta),
                        "E_C_beta": cb, "se_C_beta": secb, "pass": True}
                break
        E["S1"] = best or {"quantity": "m(beta) < 1, E|C|^beta", "estimate": math.nan, "se": math.nan,
                           "beta": None, "pass": "unknown"}
    return AssumptionReport(float(alpha), int(n_mc), E)


def expected_Z1(model, n_mc=100_000, seed=0):
    """(E[sum_j T_j], entrywise std errors)."""
    if model.analytic_EZ1 is not None:
        return np.array(model.analytic_EZ1, dtype=float), np.zeros((model.dim, model.dim))
    fb = model.sample_batch(seed, n_mc)
    Z = fb.matrices().sum(axis=1)
    return Z.mean(axis=0), Z.std(axis=0, ddof=1) / math.sqrt(n_mc)


def sample_Z1(model, n, seed=0):
    fb = model.sample_batch(seed, n)
    return fb.matrices().sum(axis=1)

"""Strictly (U, alpha)-stable laws: exponents, Levy tails and samplers.

The Levy measure of a (U, alpha)-invariant law factorizes radially:

    int f dnu = sum_atoms w int_{A_U} f(a s) ||a||^{-alpha} H(da)

with H pushed to dt/t on (0, inf) in the continuous case and counting measure
on {A^n} in the discrete case.  In the continuous case ||t^Q|| = t and
<x, t^Q s> = t p(log t) where p(v) = x^T exp(v Q') s is a trigonometric
polynomial (Q' = Q - I is skew), so every exponent evaluation reduces to
radial integrals of exp(i tau q(tau)) tau^{-alpha-1}.
"""
from dataclasses import dataclass, field
from fractions import Fraction
import math
from typing import Optional
import warnings

import numpy as np
from scipy import linalg, optimize, special

from . import rng as _rng
from .errors import ConvergenceError, DomainError
from .similarity import (
    GroupDescriptor,
    enumerate_group,
    invariant_symmetric_space,
    power_A,
    power_Q,
)

EULER_GAMMA = 0.5772156649015329
_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


class TruncationWarning(UserWarning):
    pass


class AccuracyWarning(UserWarning):
    pass


class TruncationError(DomainError):
    pass


# ------------------------------------------------------------- payloads


@dataclass(frozen=True, eq=False)
class SpectralMeasure:
    points: np.ndarray  # (k, d)
    weights: np.ndarray  # (k,)

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        if P.shape[0] != w.shape[0]:
            raise DomainError("points and weights disagree in length")
        if np.any(w <= 0):
            raise DomainError("atom weights must be positive")
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "weights", w)

    @property
    def total(self):
        return math.fsum(self.weights)

    @property
    def dim(self):
        return self.points.shape[1]

    def mean_vector(self):
        return self.weights @ self.points

    def to_dict(self):
        return {"atoms": [{"s": p.tolist(), "w": float(w)} for p, w in zip(self.points, self.weights)]}

    @classmethod
    def from_dict(cls, d):
        atoms = d["atoms"]
        return cls(np.array([a["s"] for a in atoms], dtype=float), np.array([a["w"] for a in atoms], dtype=float))


def sphere_points(d, n, offset=0.0):
    """Equal-weight discretization of the uniform law on the unit sphere."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        th = offset + 2 * np.pi * np.arange(n) / n
        return np.stack([np.cos(th), np.sin(th)], 1)
    if d == 3:
        i = np.arange(n) + 0.5
        z = 1 - 2 * i / n
        phi = np.pi * (1 + 5 ** 0.5) * i + offset
        r = np.sqrt(1 - z * z)
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], 1)
    G = _rng.generator(12345, d, n).normal(size=(n, d))
    return G / np.linalg.norm(G, axis=1, keepdims=True)


def uniform_spectral(d, n, total=1.0, offset=0.0):
    P = sphere_points(d, n, offset)
    return SpectralMeasure(P, np.full(len(P), total / len(P)))


def _merge_atoms(P, w, tol=1e-12):
    keep_p, keep_w = [], []
    for p, ww in zip(P, w):
        for i, q in enumerate(keep_p):
            if np.max(np.abs(p - q)) < tol:
                keep_w[i].append(ww)
                break
        else:
            keep_p.append(p)
            keep_w.append([ww])
    return np.array(keep_p), [math.fsum(v) for v in keep_w]


def symmetrize(rho, g, cap=10_000):
    """Orbit-average the atoms of rho over the finite group generated by C_U.

    Infinite (or huge) C_U: the input must already be invariant under every
    declared compact generator; that is checked instead.
    """
    gens = [np.asarray(o) for o in g.compact_generators]
    elems = enumerate_group(gens, g.dim, cap=cap) if gens else [np.eye(g.dim)]
    if elems is None:
        if not is_invariant(rho, gens):
            raise DomainError("compact group too large to enumerate and rho is not invariant")
        return rho
    P = np.concatenate([rho.points @ e.T for e in elems], axis=0)
    w = np.concatenate([rho.weights / len(elems) for _ in elems])
    P, wl = _merge_atoms(P, w)
    tot = rho.total
    wl[-1] = tot - math.fsum(wl[:-1])
    # the correction itself rounds; step the last weight by ulps until exact
    for _ in range(8):
        diff = tot - math.fsum(wl)
        if diff == 0:
            break
        wl[-1] = np.nextafter(wl[-1], math.copysign(math.inf, diff))
    return SpectralMeasure(P, np.array(wl))


def is_invariant(rho, gens, tol=1e-10):
    """Each generator maps every atom onto an atom of equal weight."""
    for o in gens:
        Po = rho.points @ np.asarray(o).T
        for p, w in zip(Po, rho.weights):
            hit = np.max(np.abs(rho.points - p), axis=1) < 1e-9
            if not hit.any() or abs(rho.weights[hit].sum() - w) > tol * max(1.0, w):
                return False
    return True


@dataclass(frozen=True, eq=False)
class Jump:
    rho: SpectralMeasure
    kind: str = "jump"


@dataclass(frozen=True, eq=False)
class Isotropic:
    c: float
    z: Optional[np.ndarray] = None
    kind: str = "isotropic"


@dataclass(frozen=True, eq=False)
class Operator1:
    rho: SpectralMeasure
    z: Optional[np.ndarray] = None
    kind: str = "operator1"


@dataclass(frozen=True, eq=False)
class Gaussian:
    Sigma: np.ndarray
    kind: str = "gaussian"


@dataclass(frozen=True, eq=False)
class Zero:
    kind: str = "zero"


# ------------------------------------------------------- group spectral data


class _Spectral:
    """Eigen-data of Q' (continuous) or of the rotation part of A (discrete)."""

    def __init__(self, g):
        self.g = g
        d = g.dim
        if g.kind == "continuous":
            K = g.skew
            lam, V = np.linalg.eigh(1j * K)
            self.omega = -lam  # Q' v = i omega v
            self.V = V
            nz = np.abs(self.omega) > 1e-12
            self.omega[~nz] = 0.0
            self.base, self.mult = _commensurate(self.omega)
        elif g.kind == "discrete":
            T, Z = linalg.schur(g.A.rotation.astype(complex), output="complex")
            self.phase = np.diag(T)
            self.V = Z
            self.r = g.A.scale
        else:
            raise DomainError("a stable law needs a group with a scaling part")

    def coeffs(self, x, s):
        """c_j with x^T exp(v Q') s = sum_j c_j exp(i omega_j v); x (n,d), s (d,)."""
        return (np.atleast_2d(x) @ self.V) * (self.V.conj().T @ s)[None, :]

    def rot_apply(self, v, s):
        """exp(v Q') s for a vector of v (continuous) -> (len(v), d)."""
        e = np.exp(1j * np.outer(v, self.omega))
        return np.real((e * (self.V.conj().T @ s)[None, :]) @ self.V.T)


def _commensurate(omega, max_den=24, tol=1e-9):
    nz = np.unique(np.round(np.abs(omega[np.abs(omega) > 0]), 12))
    if nz.size == 0:
        return 0.0, np.zeros(len(omega), int)
    w0 = nz[0]
    fr = []
    for w in nz:
        f = Fraction(w / w0).limit_denominator(max_den)
        if abs(float(f) * w0 - w) > tol * max(1.0, w):
            raise DomainError("rotation frequencies of Q' are incommensurate; exponent evaluation unsupported")
        fr.append(f)
    den = math.lcm(*[f.denominator for f in fr])
    base = w0 / den
    mult = np.rint(omega / base).astype(int)
    if np.max(np.abs(mult * base - omega)) > 1e-8 * max(1.0, np.max(np.abs(omega))):
        raise DomainError("could not express Q' frequencies on a common lattice")
    return base, mult


# --------------------------------------------------------------- StableSpec


@dataclass(frozen=True, eq=False)
class StableSpec:
    alpha: float
    group: GroupDescriptor
    payload: object

    def __post_init__(self):
        a, g, p = self.alpha, self.group, self.payload
        if not a > 0:
            raise DomainError("alpha must be positive")
        d = g.dim
        k = p.kind
        if k == "zero":
            return
        if k == "gaussian":
            if a != 2:
                raise DomainError("Gaussian payload needs alpha = 2")
            S = np.asarray(p.Sigma, dtype=float)
            if S.shape != (d, d) or np.max(np.abs(S - S.T)) > 1e-12:
                raise DomainError("Sigma must be a symmetric d x d matrix")
            if np.linalg.eigvalsh(S).min() < -1e-12:
                raise DomainError("Sigma must be positive semi-definite")
            basis = invariant_symmetric_space(g.orthogonal_generators(), d)
            if not basis.contains(S, tol=1e-9):
                raise DomainError("Sigma is not invariant under the group's rotations")
            object.__setattr__(p, "Sigma", S)
            return
        if k == "isotropic":
            if not 0 < a < 2:
                raise DomainError("isotropic payload needs alpha in (0, 2)")
            if p.c < 0:
                raise DomainError("c must be >= 0")
            if p.z is not None and a != 1 and np.any(np.asarray(p.z) != 0):
                raise DomainError("a drift is only strictly stable at alpha = 1")
            return
        if k in ("jump", "operator1"):
            if p.rho.dim != d:
                raise DomainError("spectral measure dimension mismatch")
            nr = np.linalg.norm(p.rho.points, axis=1)
            if g.kind == "continuous":
                if np.max(np.abs(nr - 1)) > 1e-12:
                    raise DomainError("continuous case: atoms must lie on the unit sphere")
            elif g.kind == "discrete":
                r = g.A.scale
                if np.any(nr < r * (1 - 1e-12)) or np.any(nr >= 1):
                    raise DomainError("discrete case: atoms must satisfy r <= |s| < 1")
            else:
                raise DomainError("jump payloads need a scaling group")
            gens = [o for o in g.compact_generators]
            if gens and not is_invariant(p.rho, gens):
                raise DomainError("rho is not invariant under C_U; call symmetrize first")
        if k == "jump":
            if not (0 < a < 2) or a == 1:
                raise DomainError("jump payload needs alpha in (0, 2) without 1")
            _Spectral(g)  # validates commensurability early
            return
        if k == "operator1":
            if a != 1:
                raise DomainError("Operator1 payload needs alpha = 1")
            if g.kind != "continuous":
                raise DomainError("alpha = 1 with a discrete scale group is not covered")
            sp = _Spectral(g)
            Kp = g.skew
            ker = linalg.null_space(Kp) if np.max(np.abs(Kp)) > 0 else np.eye(d)
            mv = p.rho.mean_vector()
            if ker.size and np.max(np.abs(ker.T @ mv)) > 1e-9:
                raise DomainError("rho violates the moment condition on E_1(Q^T)")
            if p.z is not None:
                z = np.asarray(p.z, dtype=float)
                if np.max(np.abs(Kp @ z)) > 1e-9 or any(np.max(np.abs(o @ z - z)) > 1e-9 for o in g.compact_generators):
                    raise DomainError("drift z must satisfy u z = ||u|| z on the group")
            return
        raise DomainError(f"unknown payload kind {k!r}")

    @property
    def dim(self):
        return self.group.dim

    @property
    def samplable(self):
        return self.payload.kind in ("zero", "gaussian", "isotropic", "jump")

    def to_dict(self):
        p = self.payload
        pd = {"kind": p.kind}
        if p.kind in ("jump", "operator1"):
            pd.update(p.rho.to_dict())
        if p.kind == "isotropic":
            pd["c"] = float(p.c)
        if getattr(p, "z", None) is not None:
            pd["z"] = np.asarray(p.z, float).tolist()
        if p.kind == "gaussian":
            pd["Sigma"] = np.asarray(p.Sigma).tolist()
        return {"alpha": float(self.alpha), "payload": pd, "group": self.group.to_dict()}

    @classmethod
    def from_dict(cls, d, group=None):
        g = group if group is not None else GroupDescriptor.from_dict(d["group"])
        p = d["payload"]
        k = p["kind"]
        z = np.asarray(p["z"], float) if "z" in p else None
        if k == "jump":
            pl = Jump(SpectralMeasure.from_dict(p))
        elif k == "operator1":
            pl = Operator1(SpectralMeasure.from_dict(p), z)
        elif k == "isotropic":
            pl = Isotropic(float(p["c"]), z)
        elif k == "gaussian":
            pl = Gaussian(np.asarray(p["Sigma"], float))
        elif k == "zero":
            pl = Zero()
        else:
            raise DomainError(f"unknown payload kind {k!r}")
        return cls(float(d["alpha"]), g, pl)


# ------------------------------------------------------- radial integrals


def _phi(y, comp):
    """exp(iy) - 1 - i y comp, accurate for small y."""
    y = np.asarray(y, dtype=float)
    small = np.abs(y) < 1e-3
    re = -2.0 * np.sin(y / 2) ** 2
    im = np.sin(y) - comp * y
    if small.any():
        ys = y[small]
        im_s = (1 - comp) * ys - ys ** 3 / 6 + ys ** 5 / 120
        im = np.where(small, 0.0, im)
        im[small] = im_s
    return re + 1j * im


def _laurent_power(coef, kmin, m):
    """Coefficients of (sum_k coef[k - kmin] z^k)^m; returns (array, new kmin)."""
    out = np.array([1.0 + 0j])
    for _ in range(m):
        out = np.convolve(out, coef)
    return out, kmin * m


class _Radial:
    """Per (x, atom) evaluation of int_0^inf phi(tau q(tau)) tau^{-a-1} dtau pieces."""

    def __init__(self, sp, T0=200.0, saddles=True, T_fixed=None):
        self.sp = sp
        self.T0 = T0
        self.saddles = saddles
        self.T_fixed = T_fixed

    def _q_lattice(self, c, A):
        # q(tau) = sum_j (c_j/A) exp(i omega_j (ln tau - ln A)) on the integer frequency lattice
        mult = self.sp.mult
        base = self.sp.base
        kmin, kmax = int(mult.min()), int(mult.max())
        coef = np.zeros(kmax - kmin + 1, complex)
        for cj, mj in zip(c, mult):
            coef[mj - kmin] += cj / A * np.exp(-1j * mj * base * math.log(A))
        return coef, kmin

    def series(self, c, A, a, m0, M=None):
        """sum_{m >= m0} i^m/m! int_0^1 tau^{m-a-1} q^m dtau."""
        coef, kmin = self._q_lattice(c, A)
        base = self.sp.base
        B = np.sum(np.abs(coef))
        if M is None:
            M = 12
            while B ** M / math.factorial(M) > 1e-18 and M < 80:
                M += 1
        tot = 0j
        pw = np.array([1.0 + 0j])
        for m in range(1, M + 1):
            pw = np.convolve(pw, coef)
            if m < m0:
                continue
            k = kmin * m + np.arange(len(pw))
            tot += (1j ** m / math.factorial(m)) * np.sum(pw / (m - a + 1j * k * base))
        return tot

    def q_funcs(self, c, A):
        om = self.sp.omega
        cc = c / A
        lnA = math.log(A)

        # p is real: keep omega >= 0 and double the positive frequencies
        keep = om >= 0
        omk = om[keep]
        ck = np.where(omk > 0, 2.0, 1.0) * cc[keep] + 0j  # conjugate pairs fold onto +omega

        def p(v, der=0):
            e = np.exp(1j * np.outer(np.atleast_1d(v), omk))
            return np.real(e @ (ck * (1j * omk) ** der))

        D = np.stack([ck * (1j * omk) ** k for k in range(3)], axis=1)

        def p012(v):
            # p, p', p'' from one exponential; shape (3, len(v))
            e = np.exp(1j * np.outer(np.atleast_1d(v), omk))
            return np.real(e @ D).T

        p.all = p012
        return p, lnA

    def oscillatory(self, c, A, a, tol=1e-9):
        """int_1^inf exp(i tau q(tau)) tau^{-a-1} dtau with stationary-phase tail.

        Returns (value, error estimate).
        """
        om = self.sp.omega
        p, lnA = self.q_funcs(c, A)
        B = float(np.sum(np.abs(c / A) * (1 + np.abs(om))))
        P = 2 * math.pi / self.sp.base if self.sp.base > 0 else 1.0
        T0 = self.T_fixed or min(2e5, max(self.T0, (1.0 / tol) ** (1.0 / (a + 1.5))))
        v0 = math.log(T0) - lnA
        # cut point: largest |theta'| in a short window, away from stationary points
        vv = v0 + np.linspace(0, min(P, math.log(2.0)), 129)
        pv = p.all(vv)
        hv = pv[0] + pv[1]
        v_hi = float(vv[np.argmax(np.abs(hv))])
        T = A * math.exp(v_hi)
        if np.max(np.abs(hv)) < 1e-14:
            raise ConvergenceError("degenerate phase: theta' vanishes identically")
        e = _panel_edges(T, 2.0 * math.pi / max(B, 1e-300))
        lo, hi = e[:-1], e[1:]
        mid, half = (lo + hi) / 2, (hi - lo) / 2
        tau = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
        wts = (half[:, None] * _GL_W[None, :]).ravel()
        th = tau * p(np.log(tau) - lnA)
        body = np.sum(wts * tau ** (-a - 1) * np.exp(1j * th))
        # endpoint: two integration-by-parts terms
        vT = math.log(T) - lnA
        pT = p.all(vT)[:, 0]
        th1 = float(pT[0] + pT[1])
        th2 = float(pT[1] + pT[2]) / T
        f0 = T ** (-a - 1)
        f1 = -(a + 1) * T ** (-a - 2)
        g1 = (f1 / th1 - f0 * th2 / th1 ** 2) / 1j
        thT = T * float(pT[0])
        end = math.e ** 0 * np.exp(1j * thT) / (1j * th1) * (-f0 + g1)
        # stationary points beyond T: zeros of h on [vT, vT + P), repeated by the period
        sad = 0j
        if self.sp.base > 0 and self.saddles:
            grid = vT + np.linspace(0, P, 513)
            pg = p.all(grid)
            hg = pg[0] + pg[1]
            roots = list(grid[:-1][hg[:-1] == 0])
            br = np.nonzero(hg[:-1] * hg[1:] < 0)[0]
            if br.size:
                # safeguarded Newton on all brackets at once (h' = p' + p'')
                lo, hi = grid[br], grid[br + 1]
                flo = hg[br]
                v = lo - flo * (hi - lo) / (hg[br + 1] - flo)
                for _ in range(30):
                    pk = p.all(v)
                    hv = pk[0] + pk[1]
                    same = np.sign(hv) == np.sign(flo)
                    lo, hi = np.where(same, v, lo), np.where(same, hi, v)
                    flo = np.where(same, hv, flo)
                    dv = pk[1] + pk[2]
                    with np.errstate(divide="ignore", invalid="ignore"):
                        vn = v - hv / dv
                    bad = ~np.isfinite(vn) | (vn < lo) | (vn > hi)
                    vn = np.where(bad, 0.5 * (lo + hi), vn)
                    eps_v = 1e-14 * max(1.0, float(np.max(np.abs(v))))
                    done = (np.abs(vn - v) <= eps_v) | (hi - lo <= eps_v) | (hv == 0)
                    v = vn
                    if np.all(done):
                        break
                roots.extend(v.tolist())
            pr = p.all(np.asarray(roots, dtype=float)) if roots else None
            for i, vk in enumerate(roots):
                hp = float(pr[1, i] + pr[2, i])
                if abs(hp) < 1e-12:
                    warnings.warn("degenerate stationary point in exponent tail", AccuracyWarning)
                    continue
                # p is P-periodic in v, so only tau changes along the repeats
                p0 = float(pr[0, i])
                t0 = A * math.exp(vk)
                amp0 = t0 ** (-a - 0.5) * math.sqrt(2 * math.pi / abs(hp))
                decay = (a + 0.5) * P
                n_max = 0 if amp0 < 1e-18 else int(math.ceil(math.log(amp0 / 1e-18) / decay))
                n = np.arange(min(n_max, 10_000) + 1)
                tk = t0 * np.exp(n * P)
                amp = amp0 * np.exp(-decay * n)
                sad += np.sum(amp * np.exp(1j * (tk * p0 + math.copysign(math.pi / 4, hp))))
        err = T ** (-a - 1.5)
        return body + end + sad, err


def _panel_edges(T, wmax):
    """Edges on [1, T]: geometric (ratio 1.25) until the width reaches wmax, then uniform."""
    tg = max(1.0, min(T, 4.0 * wmax))
    ng = max(1, math.ceil(math.log(tg) / math.log(1.25))) if tg > 1 else 0
    geo = np.geomspace(1.0, tg, ng + 1) if ng else np.array([1.0])
    nu = math.ceil((T - tg) / wmax) if T > tg else 0
    uni = np.linspace(tg, T, nu + 1)[1:] if nu else np.zeros(0)
    return np.concatenate([geo, uni])


def _pure_scaling(cval, a):
    """int_0^inf (e^{i c t} - 1 - i c t 1{a>1}) t^{-a-1} dt."""
    if cval == 0:
        return 0j
    return special.gamma(-a) * abs(cval) ** a * np.exp(-1j * math.pi * a * math.copysign(1, cval) / 2)


def _pure_scaling_alpha1(cval):
    """int_0^inf (e^{i c t} - 1 - i c t/(1+t^2)) t^{-2} dt."""
    if cval == 0:
        return 0j
    return -math.pi / 2 * abs(cval) - 1j * cval * math.log(abs(cval)) + 1j * (1 - EULER_GAMMA) * cval


# ------------------------------------------------------------- evaluation


class PsiEvaluator:
    """Reusable evaluator; caches the group spectral data."""

    def __init__(self, spec, tol=1e-9, **radial):
        self.spec = spec
        self.tol = tol
        self.achieved = 0.0
        p = spec.payload
        if p.kind in ("jump", "operator1"):
            self.sp = _Spectral(spec.group)
            self.rad = _Radial(self.sp, **radial) if spec.group.kind == "continuous" else None
        if p.kind == "operator1":
            self.gamma1 = gamma1(spec)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        out = np.array([self._one(xx) for xx in X])
        return out[0] if single else out

    def _one(self, x):
        s = self.spec
        p = s.payload
        a = s.alpha
        nx = float(np.linalg.norm(x))
        if nx == 0:
            return 0j
        k = p.kind
        if k == "zero":
            return 0j
        if k == "gaussian":
            return complex(-0.5 * x @ p.Sigma @ x)
        if k == "isotropic":
            v = -p.c * nx ** a
            if a == 1 and p.z is not None:
                return complex(v, float(np.dot(p.z, x)))
            return complex(v)
        if k == "jump":
            if s.group.kind == "discrete":
                return self._lattice(x)
            return self._continuous(x)
        if k == "operator1":
            v = self._continuous(x, alpha1=True)
            z = self.gamma1 + (0 if p.z is None else np.asarray(p.z, float))
            return v + 1j * float(np.dot(z, x))
        raise DomainError(k)

    def _continuous(self, x, alpha1=False):
        p = self.spec.payload
        a = 1.0 if alpha1 else self.spec.alpha
        comp_big = 1.0 if a > 1 else 0.0
        sp = self.sp
        A = float(np.linalg.norm(x))
        total = 0j
        for s, w in zip(p.rho.points, p.rho.weights):
            c = sp.coeffs(x, s)[0]
            rot = np.abs(c[sp.omega != 0]).sum() if np.any(sp.omega != 0) else 0.0
            if rot <= 1e-15 * A:
                c0 = float(np.real(c.sum()))
                total += w * (_pure_scaling_alpha1(c0) if alpha1 else _pure_scaling(c0, a))
                continue
            rad = self.rad
            if not alpha1:
                # tau <= 1 series, then the large-tau pieces in closed form plus oscillatory part
                ser = rad.series(c, A, a, 2 if a > 1 else 1)
                osc, err = rad.oscillatory(c, A, a, self.tol)
                minus1 = -1.0 / a
                comp = 0j
                if comp_big:
                    # -i int_1^inf q(tau) tau^{-a} dtau
                    coef, kmin = rad._q_lattice(c, A)
                    kk = kmin + np.arange(len(coef))
                    comp = -1j * np.sum(coef / (a - 1 - 1j * kk * sp.base))
                total += w * A ** a * (ser + osc + minus1 + comp)
                self.achieved = max(self.achieved, w * A ** a * err)
            else:
                total += w * self._eta1_atom(c, A, s, x)
        return total

    def _eta1_atom(self, c, A, s, x):
        """int_0^inf (e^{i g} - 1 - i g/(1+t^2)) t^{-2} dt with g = <x, t^Q s>."""
        rad = self.rad
        sp = self.sp
        ser = rad.series(c, A, 1.0, 2)
        osc, err = rad.oscillatory(c, A, 1.0, self.tol)
        self.achieved = max(self.achieved, A * err)
        # with tau = A t: small part A*ser; large part A*osc - A; plus the
        # compensator pieces i int_0^{1/A} g/(1+t^2) dt - i int_{1/A}^inf g t^{-2}/(1+t^2) dt
        p, _ = rad.q_funcs(c * A, A)  # p(v) coefficients of x^T e^{vQ'} s (unnormalized)
        lo = lambda v: np.exp(2 * v) / (1 + np.exp(2 * v)) * p(v)  # g/(1+t^2) dt in v = ln t
        hi = lambda v: p(v) / (1 + np.exp(2 * v))  # g t^-2/(1+t^2) dt
        vA = -math.log(A)
        I_lo = _gl_interval(lo, vA - 40.0, vA)
        I_hi = _gl_interval(hi, vA, vA + 40.0)
        return A * ser + A * osc - A + 1j * I_lo - 1j * I_hi

    def _lattice(self, x):
        s_ = self.spec
        p = s_.payload
        a = s_.alpha
        sp = self.sp
        r = sp.r
        lr = math.log(r)
        comp = 1.0 if a > 1 else 0.0
        nx = float(np.linalg.norm(x))
        total = 0j
        for s, w in zip(p.rho.points, p.rho.weights):
            ns = float(np.linalg.norm(s))
            # |<x, A^n s>| <= nx ns r^n; choose n range with negligible tails
            n_small = math.ceil(math.log(1e-9 / (nx * ns)) / lr)  # beyond: |y| < 1e-9
            if a < 1:
                tail_bad = 40.0 / (a * -lr)
            else:
                tail_bad = 40.0 / ((a - 1) * -lr)
            n_big = math.floor(-math.log(max(nx * ns, 1e-300)) / lr) - int(tail_bad) - 2
            big_n = int(min(n_small + int(40.0 / ((2 - a if a > 1 else 1 - a) * -lr)), n_small + 5000))
            n = np.arange(n_big, big_n + 1)
            cj = sp.coeffs(x, s)[0]
            rotv = np.real(np.exp(1j * np.outer(n, np.angle(sp.phase))) @ cj)
            y = r ** n.astype(float) * rotv
            with np.errstate(over="ignore"):
                wt = np.exp(-n * a * lr)
            terms = wt * _phi(y, comp)
            total += w * complex(math.fsum(terms.real), math.fsum(terms.imag))
        return total


def _gl_interval(f, a, b, panels=400):
    e = np.linspace(a, b, panels + 1)
    mid, half = (e[:-1] + e[1:]) / 2, (e[1:] - e[:-1]) / 2
    t = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    return float(np.sum(w * f(t)))


def psi_eval(spec, x, tol=1e-9):
    """Characteristic exponent Psi(x) (vectorized over rows of x)."""
    return PsiEvaluator(spec, tol)(x)


def eta_values(spec, x):
    """(eta_1, eta_2) = (-Re Psi, Im Psi) / |x|^alpha for alpha != 1."""
    v = np.atleast_1d(psi_eval(spec, x))
    nx = np.linalg.norm(np.atleast_2d(x), axis=1) ** spec.alpha
    return -v.real / nx, v.imag / nx


def gamma1(spec):
    """gamma^1 making eta^1 + i<gamma^1, x> homogeneous of degree one.

    Solves (Q - I) gamma = sum_w int_0^inf t^Q s 2/(1+t^2)^2 dt, obtained by
    differentiating eta^1((s^Q)^T x) - s eta^1(x) in s at s = 1.  Per
    eigenvalue i omega of Q' the radial integral is Gamma(1 + i omega/2) Gamma(1 - i omega/2).
    """
    g = spec.group
    rho = spec.payload.rho
    sp = _Spectral(g)
    om = sp.omega
    Bw = special.gamma(1 + 0.5j * om) * special.gamma(1 - 0.5j * om)
    ms = rho.mean_vector()
    rhs = np.real(sp.V @ (Bw * (sp.V.conj().T @ ms)))
    K = g.skew
    gam = np.linalg.pinv(K, rcond=1e-12) @ rhs
    if np.max(np.abs(K @ gam - rhs)) > 1e-9 * max(1.0, np.max(np.abs(rhs))):
        raise DomainError("right-hand side not in the range of Q - I (moment condition violated)")
    return gam


# --------------------------------------------------------------- Levy tails


def _atoms_discrete_nmax(r, ns, eps):
    """Largest n with r^n |s| > eps, per atom."""
    L = np.log(eps / ns) / math.log(r)
    n = np.ceil(L).astype(int) - 1
    # boundary guard
    n = np.where(r ** (n + 1.0) * ns > eps, n + 1, n)
    n = np.where(r ** n.astype(float) * ns > eps, n, n - 1)
    return n


def nu_tail(spec, radius):
    """nu({|y| > radius}) for jump-type payloads."""
    p = spec.payload
    if p.kind not in ("jump", "operator1"):
        raise DomainError("nu_tail needs a jump-type payload")
    R = np.asarray(radius, dtype=float)
    if np.any(R <= 0):
        raise DomainError("radius must be positive")
    a = spec.alpha
    g = spec.group
    if g.kind == "continuous":
        return p.rho.total * R ** (-a) / a
    r = g.A.scale
    ns = np.linalg.norm(p.rho.points, axis=1)
    Rf = np.atleast_1d(R)
    out = np.zeros(Rf.shape)
    for i, rad in enumerate(Rf):
        n0 = _atoms_discrete_nmax(r, ns, rad)
        out[i] = math.fsum(p.rho.weights * r ** (-n0 * a) / (1 - r ** a))
    return out.reshape(R.shape) if R.ndim else float(out[0])


# ---------------------------------------------------------------- samplers


@dataclass
class TruncationPlan:
    eps: float
    rate: float  # nu(B_eps^c)
    drift: np.ndarray  # per unit time, subtracted (alpha > 1) or added (alpha < 1)
    cov_small: Optional[np.ndarray]  # per unit time Gaussian correction
    expected_jumps: float
    error_metric: float
    budget: float
    budget_met: bool
    scale: float


def _small_moment(spec, eps, k):
    """int_{|y| <= eps} |y|^k nu(dy) for k > alpha."""
    p = spec.payload
    a = spec.alpha
    g = spec.group
    if g.kind == "continuous":
        return p.rho.total * eps ** (k - a) / (k - a)
    r = g.A.scale
    ns = np.linalg.norm(p.rho.points, axis=1)
    n0 = _atoms_discrete_nmax(r, ns, eps) + 1
    return float(np.sum(p.rho.weights * ns ** k * r ** (n0 * (k - a)) / (1 - r ** (k - a))))


def _drift_terms(spec, eps):
    """alpha > 1: int_{|y|>eps} y nu(dy); alpha < 1: int_{|y|<=eps} y nu(dy)."""
    p = spec.payload
    a = spec.alpha
    g = spec.group
    d = g.dim
    if g.kind == "continuous":
        M = (1 - a) * np.eye(d) + g.skew
        E = linalg.expm(math.log(eps) * M)
        ms = p.rho.mean_vector()
        if a > 1:
            return np.linalg.solve(-M, E @ ms)
        return np.linalg.solve(M, E @ ms)
    r = g.A.scale
    Rm = g.A.rotation
    out = np.zeros(d)
    ns = np.linalg.norm(p.rho.points, axis=1)
    n0 = _atoms_discrete_nmax(r, ns, eps)
    for s, w, nm in zip(p.rho.points, p.rho.weights, n0):
        if a > 1:
            # sum_{n <= nm} r^{-n a} A^n s = r^{-nm a} A^nm (I - r^a A^{-1})^{-1} s
            An = power_A(g, nm).matrix
            Ainv = power_A(g, -1).matrix
            out += w * r ** (-nm * a) * (An @ np.linalg.solve(np.eye(d) - r ** a * Ainv, s))
        else:
            An = power_A(g, nm + 1).matrix
            out += w * r ** (-(nm + 1) * a) * (An @ np.linalg.solve(np.eye(d) - r ** (-a) * g.A.matrix, s))
    return out


def _small_cov(spec, eps):
    """int_{|y| <= eps} y y^T nu(dy)."""
    p = spec.payload
    a = spec.alpha
    g = spec.group
    d = g.dim
    S = np.einsum("k,ki,kj->ij", p.rho.weights, p.rho.points, p.rho.points)
    if g.kind == "continuous":
        K = g.skew
        Ks = np.kron(K, np.eye(d)) + np.kron(np.eye(d), K) + (2 - a) * np.eye(d * d)
        # int_{-inf}^{ln eps} exp(v Ks) vec(S) dv = Ks^{-1} exp(ln eps Ks) vec(S)
        v = np.linalg.solve(Ks, linalg.expm(math.log(eps) * Ks) @ S.reshape(-1))
        C = v.reshape(d, d)
        return 0.5 * (C + C.T)
    r = g.A.scale
    C = np.zeros((d, d))
    ns = np.linalg.norm(p.rho.points, axis=1)
    n0 = _atoms_discrete_nmax(r, ns, eps) + 1
    for s, w, n1 in zip(p.rho.points, p.rho.weights, n0):
        n = int(n1)
        while True:
            An = power_A(g, n)
            v = An.apply(s)
            term = w * r ** (-n * a) * np.outer(v, v)
            C += term
            if np.max(np.abs(term)) < 1e-18 * max(1.0, np.max(np.abs(C))):
                break
            n += 1
    return 0.5 * (C + C.T)


DEFAULT_BUDGET = 1e-2


def plan_truncation(spec, t=1.0, budget=DEFAULT_BUDGET, max_jumps=1000, gaussian=None):
    """Choose the jump cutoff eps for the compound-Poisson sampler.

    eps is the smallest cutoff with at most `max_jumps` expected jumps.  The
    error metric is the discarded small-jump moment relative to the law's
    natural scale s_t (nu(B_{s_t}^c) t = 1): second moment without the
    Gaussian correction, third moment with it.  budget_met reports whether
    the metric is below `budget`.
    """
    p = spec.payload
    if p.kind != "jump":
        raise DomainError("plan_truncation needs a jump payload")
    a = spec.alpha
    if gaussian is None:
        gaussian = a > 1.5
    tot = p.rho.total
    s_t = (t * tot / a) ** (1.0 / a)
    # continuous closed form: t nu(B_eps^c) = (s_t / eps)^a
    eps = s_t * max_jumps ** (-1.0 / a)
    if spec.group.kind == "discrete":
        f = lambda le: t * nu_tail(spec, math.exp(le)) - max_jumps
        lo, hi = math.log(eps) - 10, math.log(eps) + 10
        if f(lo) > 0 > f(hi):
            eps = math.exp(optimize.brentq(f, lo, hi, xtol=1e-10))
    rate = float(nu_tail(spec, eps))
    kpow = 3 if gaussian else 2
    metric = t * _small_moment(spec, eps, kpow) / s_t ** kpow
    drift = _drift_terms(spec, eps)
    cov = _small_cov(spec, eps) if gaussian else None
    return TruncationPlan(eps, rate, drift, cov, t * rate, metric, budget, metric <= budget, s_t)


def _positive_stable(g, beta, n):
    """Positive beta-stable with E exp(-l A) = exp(-l^beta) (Kanter)."""
    U = np.pi * g.random(n)
    E = g.exponential(size=n)
    return (np.sin(beta * U) / np.sin(U) ** (1 / beta)) * (np.sin((1 - beta) * U) / E) ** ((1 - beta) / beta)


def _jump_values(spec, idx, radius_or_n, sp):
    p = spec.payload
    S = p.rho.points[idx]
    g = spec.group
    if g.kind == "continuous":
        r = radius_or_n
        e = np.exp(1j * np.outer(np.log(r), sp.omega))
        coef = S @ sp.V.conj()
        return r[:, None] * np.real((e * coef) @ sp.V.T)
    n = radius_or_n
    coef = S @ sp.V.conj()
    e = np.exp(1j * np.outer(n, np.angle(sp.phase)))
    return (sp.r ** n.astype(float))[:, None] * np.real((e * coef) @ sp.V.T)


def sample_Y(spec, t=1.0, seed=0, n=1, plan=None, gaussian=None, max_jumps=1000, budget=DEFAULT_BUDGET,
             on_budget="raise", chunk=1 << 20):
    """n draws of Y_t (t scalar or array of length n).

    Jump payloads use the compound-Poisson plan from plan_truncation; a
    plan missing its error budget raises TruncationError (on_budget='raise'),
    warns ('warn') or is accepted silently ('ignore').
    """
    p = spec.payload
    d = spec.dim
    a = spec.alpha
    tt = np.broadcast_to(np.asarray(t, dtype=float), (n,)).copy()
    if np.any(tt <= 0):
        raise DomainError("t must be positive")
    g = _rng.generator(seed, 7)
    k = p.kind
    if k == "zero":
        return np.zeros((n, d))
    if k == "gaussian":
        lam, V = np.linalg.eigh(p.Sigma)
        Lf = V * np.sqrt(np.clip(lam, 0, None))
        return np.sqrt(tt)[:, None] * (g.standard_normal((n, d)) @ Lf.T)
    if k == "isotropic":
        if p.c == 0:
            Y = np.zeros((n, d))
        else:
            kk = (p.c * 2 ** (a / 2)) ** (1 / a)
            Apos = _positive_stable(g, a / 2, n)
            Y = kk * np.sqrt(Apos)[:, None] * g.standard_normal((n, d))
            Y *= tt[:, None] ** (1 / a)
        if a == 1 and p.z is not None:
            Y += tt[:, None] * np.asarray(p.z, float)[None, :]
        return Y
    if k == "operator1":
        raise DomainError("the alpha = 1 operator payload supports exponent evaluation only")
    if plan is None:
        plan = plan_truncation(spec, float(np.mean(tt)), budget, max_jumps, gaussian)
    if not plan.budget_met and on_budget != "ignore":
        msg = (f"truncation error metric {plan.error_metric:.2e} exceeds budget {plan.budget:.1e} "
               f"(eps={plan.eps:.3g}, {plan.expected_jumps:.0f} jumps per draw)")
        if on_budget == "raise":
            raise TruncationError(msg)
        warnings.warn(msg, TruncationWarning, stacklevel=2)
    sp = _Spectral(spec.group)
    counts = g.poisson(tt * plan.rate)
    Y = np.zeros((n, d))
    w = p.rho.weights / p.rho.total
    grp = spec.group
    if grp.kind == "discrete":
        r = grp.A.scale
        ns = np.linalg.norm(p.rho.points, axis=1)
        nmax = _atoms_discrete_nmax(r, ns, plan.eps)
        mass = p.rho.weights * r ** (-nmax * a) / (1 - r ** a)
        w = mass / mass.sum()
    owner = np.repeat(np.arange(n), counts)
    for s0 in range(0, len(owner), chunk):
        own = owner[s0:s0 + chunk]
        m = len(own)
        idx = g.choice(len(w), size=m, p=w)
        if grp.kind == "continuous":
            rad = plan.eps * g.random(m) ** (-1.0 / a)
            J = _jump_values(spec, idx, rad, sp)
        else:
            G = g.geometric(1 - r ** a, size=m) - 1
            J = _jump_values(spec, idx, nmax[idx] - G, sp)
        for i in range(d):
            Y[:, i] += np.bincount(own, weights=J[:, i], minlength=n)
    if a > 1:
        Y -= tt[:, None] * plan.drift[None, :]
    else:
        Y += tt[:, None] * plan.drift[None, :]
    if plan.cov_small is not None:
        lam, V = np.linalg.eigh(plan.cov_small)
        Lf = V * np.sqrt(np.clip(lam, 0, None))
        Y += np.sqrt(tt)[:, None] * (g.standard_normal((n, d)) @ Lf.T)
    return Y


def sample_YW(spec, W, seed=0, shortcut=False, **kw):
    """Y at the random times W (array): time change, or power_Q(W^{1/alpha}) Y_1."""
    W = np.atleast_1d(np.asarray(W, dtype=float))
    n = len(W)
    if np.any(W <= 0):
        raise DomainError("W must be positive")
    if not shortcut:
        return sample_Y(spec, W, seed, n, **kw)
    g = spec.group
    if g.kind != "continuous":
        raise DomainError("the power_Q shortcut needs a continuous group")
    Y1 = sample_Y(spec, 1.0, seed, n, **kw)
    a = spec.alpha
    out = np.empty_like(Y1)
    sp = _Spectral(g)
    u = W ** (1 / a)
    e = np.exp(1j * np.outer(np.log(u), sp.omega))
    coef = Y1 @ sp.V.conj()
    out = u[:, None] * np.real((e * coef) @ sp.V.T)
    return out


def random_group_elements(g, k, seed=0, tmin=0.2, tmax=5.0):
    """k elements u of the group (as Similarity): scale part times an element of C_U."""
    gen = _rng.generator(seed, 3)
    elems = enumerate_group(g.compact_generators, g.dim) if g.compact_generators else [np.eye(g.dim)]
    out = []
    from .similarity import Similarity, compose, generic_rotations, polar_project
    for _ in range(k):
        if g.kind == "continuous":
            a = power_Q(g, float(math.exp(gen.uniform(math.log(tmin), math.log(tmax)))))
        else:
            a = power_A(g, int(gen.integers(-3, 4)))
        if g.isotropic:
            M = gen.normal(size=(g.dim, g.dim))
            o = polar_project(M)
            if np.linalg.det(o) < 0:
                o[:, 0] *= -1
        elif elems is not None:
            o = elems[int(gen.integers(len(elems)))]
        else:
            o = np.eye(g.dim)
        out.append(compose(a, Similarity(1.0, o)))
    return out

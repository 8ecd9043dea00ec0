"""Similarity matrices, closed similarity groups and invariant covariances.

A similarity is stored as (scale, rotation) with rotation orthogonal, so the
scale of a product is an exact product of scalars and -log(scale) accumulates
without drift.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.linalg import expm

from .errors import DomainError

ORTHO_TOL = 1e-12
DRIFT_TOL = 1e-10
REORTH_EVERY = 64


def _drift(R):
    return float(np.max(np.abs(R @ R.T - np.eye(R.shape[0]))))


def polar_project(R):
    """Nearest orthogonal matrix (Frobenius), via the SVD."""
    u, _, vt = np.linalg.svd(R)
    return u @ vt


def polar_project_batch(R):
    u, _, vt = np.linalg.svd(R)
    return u @ vt


@dataclass(frozen=True, eq=False)
class Similarity:
    scale: float
    rotation: np.ndarray
    n_since_reorth: int = field(default=0, compare=False)

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise DomainError("rotation must be a square matrix")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise DomainError(f"scale must be positive and finite, got {self.scale}")
        if _drift(R) > ORTHO_TOL * max(1, R.shape[0]) * 10:
            raise DomainError("rotation is not orthogonal")
        R.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def dim(self):
        return self.rotation.shape[0]

    @property
    def matrix(self):
        return self.scale * self.rotation

    @property
    def log_scale(self):
        return math.log(self.scale)

    def inverse(self):
        return Similarity(1.0 / self.scale, self.rotation.T.copy())

    def apply(self, x):
        return self.scale * (self.rotation @ np.asarray(x, dtype=float))

    def __matmul__(self, other):
        if isinstance(other, Similarity):
            return compose(self, other)
        return self.apply(other)

    def allclose(self, other, tol=1e-12):
        return abs(self.scale - other.scale) <= tol * max(1.0, abs(other.scale)) and np.allclose(
            self.rotation, other.rotation, atol=tol, rtol=0
        )

    def to_dict(self):
        return {"scale": self.scale, "rotation": self.rotation.tolist()}

    @classmethod
    def from_dict(cls, d):
        if "matrix" in d:
            return from_matrix(np.asarray(d["matrix"], dtype=float))
        return cls(float(d["scale"]), np.asarray(d["rotation"], dtype=float))

    @classmethod
    def identity(cls, d):
        return cls(1.0, np.eye(d))

    def __repr__(self):
        return f"Similarity(scale={self.scale!r}, rotation={self.rotation.tolist()!r})"


def from_matrix(M, tol=1e-9):
    """Split a dense similarity matrix into (scale, rotation)."""
    M = np.asarray(M, dtype=float)
    d = M.shape[0]
    s = abs(np.linalg.det(M)) ** (1.0 / d)
    if s == 0:
        raise DomainError("singular matrix is not a similarity")
    R = M / s
    if _drift(R) > tol:
        raise DomainError("matrix is not a scalar multiple of an orthogonal matrix")
    return Similarity(s, polar_project(R))


def compose(a, b):
    """Product a*b: first apply b, then a.  Order matters for rotations."""
    if a.dim != b.dim:
        raise DomainError(f"dimension mismatch: {a.dim} vs {b.dim}")
    R = a.rotation @ b.rotation
    n = max(a.n_since_reorth, b.n_since_reorth) + 1
    if n >= REORTH_EVERY or _drift(R) > DRIFT_TOL:
        R = polar_project(R)
        n = 0
    return Similarity(a.scale * b.scale, R, n)


def rotation2(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def from_complex(z):
    """Similarity of R^2 acting as multiplication by the complex number z."""
    z = complex(z)
    if z == 0:
        raise DomainError("z must be nonzero")
    return Similarity(abs(z), rotation2(math.atan2(z.imag, z.real)))


def to_complex(a):
    if a.dim != 2:
        raise DomainError("to_complex needs a 2x2 similarity")
    R = a.rotation
    if np.linalg.det(R) < 0:
        raise DomainError("reflection has no complex-number form")
    return a.scale * complex(R[0, 0], R[1, 0])


# ----------------------------------------------------------------- groups

KINDS = ("continuous", "discrete", "trivial")


@dataclass(frozen=True, eq=False)
class GroupDescriptor:
    """Closed similarity group U = A_U x| C_U, with declared scale part.

    kind 'continuous': A_U = {t^Q : t > 0} with Q = I + skew.
    kind 'discrete': A_U = {A^n : n in Z} with ||A|| = r in (0, 1).
    kind 'trivial': no scaling (U inside O(d)).
    """

    dim: int
    kind: str
    Q: np.ndarray = None
    A: Similarity = None
    compact_generators: tuple = ()
    isotropic: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown group kind {self.kind!r}")
        d = self.dim
        gens = tuple(np.array(g, dtype=float) for g in self.compact_generators)
        for g in gens:
            if g.shape != (d, d) or _drift(g) > ORTHO_TOL * 10:
                raise DomainError("compact generator is not an orthogonal d x d matrix")
            g.setflags(write=False)
        object.__setattr__(self, "compact_generators", gens)
        if self.kind == "continuous":
            if self.Q is None:
                raise DomainError("continuous group needs Q")
            Q = np.array(self.Q, dtype=float)
            if Q.shape != (d, d):
                raise DomainError("Q has wrong shape")
            c = np.trace(Q) / d
            K = Q - c * np.eye(d)
            if np.max(np.abs(K + K.T)) > 1e-12 * max(1.0, np.max(np.abs(Q))):
                raise DomainError("Q - c*I is not skew-symmetric")
            if abs(c - 1.0) > 1e-12:
                raise DomainError(f"Q is not normalized (c = {c}); use normalize_Q")
            Q.setflags(write=False)
            object.__setattr__(self, "Q", Q)
            for t in (0.37, 2.0, 11.0):
                if abs(np.linalg.norm(expm(math.log(t) * Q), 2) - t) > 1e-9 * t:
                    raise DomainError("||t^Q|| != t")
        elif self.kind == "discrete":
            if self.A is None:
                raise DomainError("discrete group needs a generator A")
            A = self.A if isinstance(self.A, Similarity) else Similarity.from_dict(self.A)
            if A.dim != d or not (0 < A.scale < 1):
                raise DomainError("discrete generator must have norm in (0, 1)")
            object.__setattr__(self, "A", A)

    @property
    def skew(self):
        """Q' = Q - I for the continuous case, else None."""
        if self.kind != "continuous":
            return None
        return self.Q - np.eye(self.dim)

    @property
    def r(self):
        return self.A.scale if self.kind == "discrete" else None

    def orthogonal_generators(self):
        """Orthogonal matrices whose generated group contains {u/||u||}."""
        gens = list(self.compact_generators)
        if self.kind == "continuous":
            K = self.skew
            if np.max(np.abs(K)) > 0:
                gens += [expm(v * K) for v in (1.0, math.sqrt(2.0))]
        elif self.kind == "discrete":
            gens.append(self.A.rotation)
        if self.isotropic:
            gens += generic_rotations(self.dim)
        return gens

    def to_dict(self):
        out = {"kind": self.kind, "dim": self.dim}
        if self.kind == "continuous":
            out["Q"] = self.Q.tolist()
        if self.kind == "discrete":
            out["A"] = self.A.to_dict()
        out["compact_generators"] = [g.tolist() for g in self.compact_generators]
        out["isotropic"] = bool(self.isotropic)
        return out

    @classmethod
    def from_dict(cls, d):
        kind = d["kind"]
        gens = tuple(np.asarray(g, dtype=float) for g in d.get("compact_generators", []))
        iso = bool(d.get("isotropic", False))
        if kind == "continuous":
            Q = np.asarray(d["Q"], dtype=float)
            return cls(Q.shape[0], kind, Q=Q, compact_generators=gens, isotropic=iso)
        if kind == "discrete":
            A = Similarity.from_dict(d["A"])
            return cls(A.dim, kind, A=A, compact_generators=gens, isotropic=iso)
        return cls(int(d["dim"]), kind, compact_generators=gens, isotropic=iso)


def normalize_Q(Q):
    Q = np.asarray(Q, dtype=float)
    c = np.trace(Q) / Q.shape[0]
    if c <= 0:
        raise DomainError("Q must have positive symmetric part")
    return Q / c


def Q_from_complex(lam):
    """2x2 exponent of the group {t^lam} written as t^Q with ||t^Q|| = t."""
    lam = complex(lam)
    if lam.real <= 0:
        raise DomainError("need Re(lambda) > 0")
    w = lam.imag / lam.real
    return np.array([[1.0, -w], [w, 1.0]])


def continuous_group(Q, compact_generators=(), isotropic=False):
    Q = normalize_Q(Q)
    return GroupDescriptor(Q.shape[0], "continuous", Q=Q, compact_generators=tuple(compact_generators), isotropic=isotropic)


def discrete_group(A, compact_generators=(), isotropic=False):
    return GroupDescriptor(A.dim, "discrete", A=A, compact_generators=tuple(compact_generators), isotropic=isotropic)


def isotropic_group(d):
    return GroupDescriptor(d, "continuous", Q=np.eye(d), isotropic=True)


def generic_rotations(d):
    # two fixed rotations generating a dense subgroup of SO(d)
    if d == 1:
        return []
    rng = np.random.default_rng(20240611)
    out = []
    for _ in range(2):
        K = rng.normal(size=(d, d))
        out.append(expm(K - K.T))
    return out


def power_Q(g, t):
    """t^Q = exp(log(t) Q) as a Similarity with scale exactly t."""
    if g.kind != "continuous":
        raise DomainError("power_Q needs a continuous group")
    if not t > 0:
        raise DomainError("t must be positive")
    R = expm(math.log(t) * g.skew)
    return Similarity(float(t), polar_project(R))


def power_A(g, n):
    if g.kind != "discrete":
        raise DomainError("power_A needs a discrete group")
    R = np.linalg.matrix_power(g.A.rotation, int(n)) if n >= 0 else np.linalg.matrix_power(g.A.rotation.T, -int(n))
    return Similarity(g.A.scale ** int(n), polar_project(R))


def polar_coords(x, g):
    """Unique x = a s with a in A_U and s in S_U.

    Continuous: |s| = 1 and a = t^Q with t = |x|.
    Discrete: r <= |s| < 1 and a = A^n.
    """
    x = np.asarray(x, dtype=float)
    nx = float(np.linalg.norm(x))
    if nx == 0:
        raise DomainError("x must be nonzero")
    if g.kind == "trivial":
        raise DomainError("no polar decomposition for a group without scaling")
    if g.kind == "continuous":
        a = power_Q(g, nx)
        s = a.inverse().apply(x)
        return a, s
    r = g.A.scale
    lr = math.log(r)
    n = math.ceil(math.log(nx) / lr) - 1
    # guard the boundaries against rounding
    for _ in range(3):
        sn = nx / r ** n
        if sn >= 1.0:
            n += 1
        elif sn < r:
            n -= 1
        else:
            break
    a = power_A(g, n)
    return a, a.inverse().apply(x)


def enumerate_group(generators, d, cap=10_000, tol=1e-9):
    """All elements of the finite group generated by orthogonal matrices.

    Returns None when the closure exceeds `cap` elements.
    """
    elems = [np.eye(d)]
    frontier = [np.eye(d)]
    gens = [np.asarray(g, float) for g in generators]
    while frontier:
        nxt = []
        for e in frontier:
            for g in gens:
                h = g @ e
                if not any(np.max(np.abs(h - k)) < tol for k in elems):
                    elems.append(h)
                    nxt.append(h)
                    if len(elems) > cap:
                        return None
        frontier = nxt
    return elems


def check_membership(g, sims, tol=1e-9):
    """Check that sampled similarities lie in the declared group.

    The scale check is on log scale (tolerance `tol`); the rotation check
    compares the compact part against the enumerated C_U when that group is
    finite, and is reported as unknown otherwise.
    """
    sims = list(sims)
    bad_scale = 0
    bad_rot = 0
    unknown = 0
    elems = None
    if not g.isotropic:
        elems = enumerate_group(g.compact_generators, g.dim)
    for T in sims:
        ls = math.log(T.scale)
        if g.kind == "trivial":
            ok = abs(ls) < tol
            a = Similarity.identity(g.dim)
        elif g.kind == "discrete":
            k = ls / math.log(g.A.scale)
            ok = abs(k - round(k)) < tol
            a = power_A(g, round(k))
        else:
            ok = True
            a = power_Q(g, T.scale)
        bad_scale += not ok
        c = a.rotation.T @ T.rotation
        if g.isotropic:
            continue
        if elems is None:
            unknown += 1
        elif not any(np.max(np.abs(c - e)) < 1e-7 for e in elems):
            bad_rot += 1
    return {"n": len(sims), "scale_violations": bad_scale, "rotation_violations": bad_rot, "rotation_unknown": unknown}


# ----------------------------------------------------- invariant symmetric


@dataclass(frozen=True, eq=False)
class SymmetricBasis:
    dim: int
    basis: tuple

    def __len__(self):
        return len(self.basis)

    def project(self, S):
        """Frobenius-orthogonal projection onto the span."""
        S = np.asarray(S, dtype=float)
        out = np.zeros_like(S)
        for B in self.basis:
            out += np.sum(B * S) * B
        return out

    def contains(self, S, tol=1e-9):
        S = np.asarray(S, dtype=float)
        return float(np.max(np.abs(self.project(S) - S))) <= tol * max(1.0, float(np.max(np.abs(S))))


def _sym_basis(d):
    out = []
    for i in range(d):
        for j in range(i, d):
            E = np.zeros((d, d))
            if i == j:
                E[i, i] = 1.0
            else:
                E[i, j] = E[j, i] = 1.0 / math.sqrt(2.0)
            out.append(E)
    return out


def _sym_coords(S, basis):
    return np.array([np.sum(B * S) for B in basis])


def invariant_symmetric_space(generators, d, tol=1e-10):
    """Basis of {S symmetric : o S o^T = S for every generator o}."""
    gens = [np.asarray(o, dtype=float) for o in generators]
    for o in gens:
        if o.shape != (d, d) or _drift(o) > 1e-10:
            raise DomainError("generator is not orthogonal")
    E = _sym_basis(d)
    D = len(E)
    if not gens:
        return SymmetricBasis(d, tuple(E))
    rows = []
    for o in gens:
        cols = [_sym_coords(o @ B @ o.T - B, E) for B in E]
        rows.append(np.array(cols).T)
    M = np.vstack(rows)
    _, sv, vt = np.linalg.svd(M)
    sv = np.concatenate([sv, np.zeros(D - len(sv))])
    null = vt[sv <= tol * max(1.0, sv[0])]
    basis = []
    for v in null:
        S = sum(c * B for c, B in zip(v, E))
        S = 0.5 * (S + S.T)
        for o in gens:
            if np.max(np.abs(o @ S @ o.T - S)) > 1e-10:
                raise DomainError("invariant basis element failed its membership check")
        basis.append(S)
    return SymmetricBasis(d, tuple(basis))

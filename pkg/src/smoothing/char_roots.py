"""Roots of the characteristic equations of the split-tree examples.

chi(z) = prod_{j=1}^{b-1} (z + j) - b!  and  psi(z) = E[sum_j V_j^z] = 1.

The polynomial is never expanded: b! overflows nothing, but the expanded
coefficients lose all relative accuracy by b ~ 20.  Everything below works
with the product form and its logarithm.
"""
from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy.special import gammaln, loggamma, digamma

from .errors import ConvergenceError, DomainError

LAMBDA2_TIE = 1e-9


class RealSecondRootWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RootSet:
    roots: np.ndarray
    residuals: np.ndarray
    b: int = None
    method: str = "given"
    iterations: int = 0
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_roots(cls, roots, b=None):
        r = np.asarray(roots, dtype=complex)
        return cls(r, np.zeros(len(r)), b=b)

    def __len__(self):
        return len(self.roots)

    def max_residual(self):
        return float(np.max(self.residuals)) if len(self.residuals) else 0.0


def _log_prod(z, shifts):
    return np.sum(np.log(z[:, None] + shifts[None, :]), axis=1)


def aberth_product(shifts, log_const, max_iter=500, tol=1e-13, radius=None):
    """All roots of prod_j (z + shifts_j) = exp(log_const).

    Aberth-Ehrlich iteration.  The Newton ratio p/p' is evaluated as
    (1 - c/P(z)) / sum_j 1/(z + s_j), with c/P(z) formed in log space.
    Returns (roots, iterations).
    """
    shifts = np.asarray(shifts, dtype=float)
    n = len(shifts)
    if n == 0:
        return np.zeros(0, complex), 0
    center = -float(np.mean(shifts))
    if radius is None:
        radius = float(np.max(np.abs(shifts + center))) + max(1.0, n / 2)
    k = np.arange(n)
    z = center + radius * np.exp(1j * (2 * np.pi * k / n + 0.4))
    done = np.zeros(n, bool)
    for it in range(1, max_iter + 1):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            ratio_c = np.exp(log_const - _log_prod(z, shifts))
            sinv = np.sum(1.0 / (z[:, None] + shifts[None, :]), axis=1)
            newton = (1.0 - ratio_c) / sinv
            diff = z[:, None] - z[None, :]
            np.fill_diagonal(diff, np.inf)
            rep = np.sum(1.0 / diff, axis=1)
            w = newton / (1.0 - newton * rep)
        w = np.where(np.isfinite(w), w, 0.0)
        w[done] = 0.0
        z = z - w
        done |= np.abs(w) <= tol * np.maximum(1.0, np.abs(z))
        if done.all():
            return z, it
    raise ConvergenceError(f"Aberth iteration did not converge in {max_iter} steps "
                           f"({int((~done).sum())} of {n} roots unsettled)")


def _polish(z, shifts, log_const, steps=3):
    # plain Newton steps in the product form
    for _ in range(steps):
        with np.errstate(over="ignore", invalid="ignore"):
            ratio_c = np.exp(log_const - _log_prod(z, shifts))
            sinv = np.sum(1.0 / (z[:, None] + shifts[None, :]), axis=1)
            step = (1.0 - ratio_c) / sinv
        z = z - np.where(np.isfinite(step), step, 0.0)
    return z


def product_residuals(roots, shifts, const_int=None, log_const=None, dps=50):
    """|prod(z + s_j) - c| in extended precision, scaled by max(1, c + prod|z + s_j|)."""
    import mpmath as mp

    with mp.workdps(dps):
        if const_int is not None:
            c = mp.mpf(const_int)
        else:
            c = mp.e ** mp.mpf(log_const)
        out = []
        for r in roots:
            zr = mp.mpc(r.real, r.imag)
            p = mp.mpf(1)
            pa = mp.mpf(1)
            for s in shifts:
                p *= zr + s
                pa *= abs(zr + s)
            out.append(float(abs(p - c) / max(mp.mpf(1), c + pa)))
    return np.array(out)


def product_poly_roots(shifts, const_int=None, log_const=None, rtol=1e-10):
    """Roots of prod_j(z + s_j) = c for real shifts, with a residual pass."""
    shifts = np.asarray(shifts, dtype=float)
    if log_const is None:
        log_const = math.log(const_int)
    z, it = aberth_product(shifts, log_const)
    z = _polish(z, shifts, log_const)
    # real coefficients: snap near-real roots, then pair conjugates
    z = np.where(np.abs(z.imag) < 1e-13 * np.maximum(1.0, np.abs(z)), z.real + 0j, z)
    z = z[np.lexsort((z.imag, z.real))]
    res = product_residuals(z, shifts, const_int=const_int, log_const=log_const)
    if np.any(res > rtol):
        raise ConvergenceError(f"root residual {res.max():.3e} above {rtol:g}")
    return z, res, it


def chi_roots(b):
    """All b-1 roots of prod_{j=1}^{b-1}(z + j) = b!."""
    if int(b) != b or b < 4:
        raise DomainError(f"chi_roots needs an integer b >= 4, got {b}")
    b = int(b)
    shifts = np.arange(1, b, dtype=float)
    z, res, it = product_poly_roots(shifts, const_int=math.factorial(b))
    i1 = int(np.argmin(np.abs(z - 1.0)))
    z[i1] = 1.0  # exact root by telescoping
    res[i1] = 0.0
    return RootSet(z, res, b=b, method="aberth-product", iterations=it)


def select_lambda2(rs):
    """Second root: largest real part among roots != 1, with Im > 0.

    Ties in real part (within 1e-9) go to the smallest positive imaginary
    part.  A real second root is returned with a RealSecondRootWarning.
    """
    r = np.asarray(rs.roots if isinstance(rs, RootSet) else rs, dtype=complex)
    d1 = np.abs(r - 1.0)
    if d1.size == 0 or d1.min() > 1e-8:
        raise DomainError("root set does not contain 1")
    rest = np.delete(r, int(np.argmin(d1)))
    if rest.size == 0:
        raise DomainError("no root besides 1")
    top = rest.real.max()
    cand = rest[rest.real >= top - LAMBDA2_TIE]
    im = np.abs(cand.imag)
    pos = im[im > 1e-12]
    if pos.size == 0:
        warnings.warn("second root is real", RealSecondRootWarning, stacklevel=2)
        return complex(float(np.max(cand.real)), 0.0)
    k = float(pos.min())
    re = float(np.max(cand.real[np.abs(im - k) <= 1e-12 * max(1.0, k)]))
    return complex(re, k)


def lambda2(b):
    return select_lambda2(chi_roots(b))


# --------------------------------------------------------------- psi(z)


class DirichletPsi:
    """psi(z) = E[sum_{j<=b} V_j^z] for symmetric Dirichlet(a,...,a) spacings.

    psi(z) = b Gamma(a+z) Gamma(ba) / (Gamma(a) Gamma(ba+z)); a = 1 gives
    uniform spacings and psi(z) = b! Gamma(z+1)/Gamma(z+b).
    """

    def __init__(self, b, a=1.0):
        if b < 2 or a <= 0:
            raise DomainError("need b >= 2 and a > 0")
        self.b = int(b)
        self.a = float(a)
        self._c = math.log(b) + gammaln(b * a) - gammaln(a)

    def log_value(self, z):
        z = np.asarray(z, dtype=complex)
        return self._c + loggamma(self.a + z) - loggamma(self.b * self.a + z)

    def __call__(self, z):
        return np.exp(self.log_value(z))

    def deriv(self, z):
        z = np.asarray(z, dtype=complex)
        return self(z) * (digamma(self.a + z) - digamma(self.b * self.a + z))

    def integer_form(self):
        """(shifts, const) with psi(z) = 1 iff prod(z + shifts) = const, when a is an integer."""
        if self.a != int(self.a):
            return None
        a, b = int(self.a), self.b
        shifts = np.arange(a, b * a, dtype=float)
        const = b * math.factorial(b * a - 1) // math.factorial(a - 1)
        return shifts, const


class SamplePsi:
    """Monte-Carlo psi from a fixed sample of spacing vectors (experimental)."""

    def __init__(self, V):
        V = np.asarray(V, dtype=float)
        if V.ndim != 2 or np.any(V <= 0):
            raise DomainError("spacings must be a positive (n, b) array")
        self.logV = np.log(V)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return np.mean(np.sum(np.exp(self.logV[..., None] * z.ravel()), axis=1), axis=0).reshape(z.shape)

    def deriv(self, z):
        z = np.asarray(z, dtype=complex)
        e = self.logV[..., None] * np.exp(self.logV[..., None] * z.ravel())
        return np.mean(np.sum(e, axis=1), axis=0).reshape(z.shape)


def psi_root_near(model, z0, tol=1e-12, max_iter=100):
    """Damped Newton on psi(z) - 1 from z0.

    `model` is a WeightModel exposing .psi, or a psi object directly.
    """
    psi = getattr(model, "psi", model)
    if psi is None or not callable(psi) or not hasattr(psi, "deriv"):
        raise DomainError("model has no evaluable psi (unsupported)")
    z = complex(z0)
    f = complex(psi(z)) - 1.0
    for _ in range(max_iter):
        if abs(f) < tol:
            return z
        d = complex(psi.deriv(z))
        if d == 0 or not np.isfinite(d):
            break
        step = f / d
        lam = 1.0
        while lam > 1e-6:
            zn = z - lam * step
            fn = complex(psi(zn)) - 1.0
            if np.isfinite(fn) and abs(fn) < abs(f):
                break
            lam *= 0.5
        else:
            break
        z, f = zn, fn
    if abs(f) < tol:
        return z
    raise ConvergenceError(f"Newton on psi(z) = 1 diverged from z0 = {z0} (|psi - 1| = {abs(f):.3e})")


def psi_lambda2(psi, start=None):
    """Second root of psi(z) = 1 for Dirichlet spacings.

    Integer a: all roots from the product polynomial.  Otherwise Newton,
    continued from the a = 1 root along a homotopy in a.
    """
    form = psi.integer_form() if isinstance(psi, DirichletPsi) else None
    if form is not None:
        shifts, const = form
        z, res, _ = product_poly_roots(shifts, const_int=const)
        return select_lambda2(RootSet(z, res, b=psi.b))
    if not isinstance(psi, DirichletPsi):
        if start is None:
            raise DomainError("a starting point is required for a general psi")
        return psi_root_near(psi, start, tol=1e-10)
    z = lambda2(psi.b) if start is None and psi.b >= 4 else (start if start is not None else None)
    if z is None:
        z, res, _ = product_poly_roots(np.arange(1, psi.b, dtype=float), const_int=math.factorial(psi.b))
        z = select_lambda2(RootSet(z, res))
    for a in np.linspace(1.0, psi.a, 21)[1:]:
        z = psi_root_near(DirichletPsi(psi.b, a), z, tol=1e-13)
    return complex(z.real, abs(z.imag))

"""Optional matplotlib figures rendered next to the CSV outputs."""
import numpy as np


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def m_curve(path, s, m, alpha=None):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(s, m, lw=1.5)
    ax.axhline(1.0, color="k", lw=0.6, ls="--")
    if alpha is not None and np.isfinite(alpha):
        ax.axvline(alpha, color="C3", lw=0.8)
    ax.set_xlabel("s")
    ax.set_ylabel("m(s)")
    ax.set_xscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def phase(path, params, alphas, label):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    a = np.minimum(np.asarray(alphas, float), 4.0)
    ax.plot(params, a, "o-")
    ax.axhline(2.0, color="k", lw=0.6, ls="--")
    ax.set_xlabel(label)
    ax.set_ylabel("alpha (clipped at 4)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def roots(path, z):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot(np.real(z), np.imag(z), ".")
    ax.axvline(0.5, color="k", lw=0.6, ls="--")
    ax.set_xlabel("Re z")
    ax.set_ylabel("Im z")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def histogram(path, values, label):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    lo, hi = (float(v.min()), float(v.max())) if v.size else (0.0, 0.0)
    if hi - lo <= 1e-9 * max(1.0, abs(lo)):
        # point mass (e.g. W = 1 for unit-sum weights)
        ax.hist(v, bins=1, range=(lo - 0.5, lo + 0.5))
    else:
        ax.hist(v, bins=80, density=True)
    ax.set_xlabel(label)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def ecf_compare(path, lhs, rhs, se):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    k = np.arange(len(lhs))
    ax.errorbar(k, np.real(lhs), yerr=2 * se, fmt="o", ms=3, label="Re lhs")
    ax.plot(k, np.real(rhs), "x", label="Re rhs")
    ax.errorbar(k, np.imag(lhs), yerr=2 * se, fmt="s", ms=3, label="Im lhs")
    ax.plot(k, np.imag(rhs), "+", label="Im rhs")
    ax.set_xlabel("grid point")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def psi_grid(path, re, im):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    k = np.arange(len(re))
    ax.plot(k, re, "o-", label="Re psi")
    ax.plot(k, im, "s-", label="Im psi")
    ax.set_xlabel("grid point")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

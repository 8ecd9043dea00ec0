"""Weighted branching trees: the martingales W_n, Z_n, W*_n and stopping lines.

The traversal is depth first over chunks of nodes: an explicit stack holds
arrays of sibling nodes (from many replicas at once), so memory stays bounded
by depth x chunk size while numpy does the work per chunk.  Each node's
weight family is drawn from its own counter-based stream, keyed by the path
from the root, so a realization does not depend on chunking or threads.

L(v) is carried as (S(v), O(v)) with S(v) = -log||L(v)|| and O(v)
orthogonal; for complex models O(v) is a unit complex number.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
from typing import Optional, Sequence
import warnings

import numpy as np

from . import rng
from .errors import DomainError, NodeLimitError
from .similarity import polar_project_batch

REORTH_EVERY = 64
PRUNE_FACTOR = 10.0


class NodeLimitWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BranchingConfig:
    max_depth: Optional[int] = None
    level: Optional[float] = None
    max_nodes: int = 10_000_000
    seed: int = 0
    prune: bool = False
    eps_prune: float = 1e-10
    chunk: int = 1 << 15
    block: int = 512
    threads: int = 1
    strict: bool = False

    def __post_init__(self):
        if (self.max_depth is None) == (self.level is None):
            raise DomainError("exactly one of max_depth / level must be set")
        if self.max_depth is not None and self.max_depth < 0:
            raise DomainError("max_depth must be >= 0")
        if self.level is not None and not self.level >= 0:
            raise DomainError("level must be >= 0")
        if self.max_nodes < 1:
            raise DomainError("max_nodes must be >= 1")

    @property
    def mode(self):
        return "depth" if self.max_depth is not None else "line"


@dataclass
class MartingaleDraw:
    W_n: float
    Z_n: np.ndarray
    Zw: Optional[np.ndarray]
    Wstar_n: np.ndarray
    node_count: int
    discarded_mass_bound: float
    depth: int
    level: Optional[float] = None
    truncated: bool = False
    members: Optional[dict] = None


@dataclass
class MartingaleBatch:
    """Per-replica results; *_by_depth arrays have a depth axis 0..n."""

    seed: int
    depth: int
    level: Optional[float]
    W: np.ndarray
    Z: np.ndarray  # (R, d, d)
    Wstar: np.ndarray  # (R, d)
    node_count: np.ndarray
    discarded: np.ndarray
    truncated: np.ndarray
    W_by_depth: Optional[np.ndarray] = None
    Z_by_depth: Optional[np.ndarray] = None
    Wstar_by_depth: Optional[np.ndarray] = None
    leaf_sums: Optional[np.ndarray] = None
    members: Optional[dict] = None
    Zc: Optional[np.ndarray] = None  # complex encoding when available
    Zc_by_depth: Optional[np.ndarray] = None

    @property
    def replicas(self):
        return self.W.shape[0]

    def Zw(self, w):
        return np.einsum("rij,j->ri", self.Z, np.asarray(w, dtype=float))

    def draw(self, i=0, w=None):
        mem = None
        if self.members is not None:
            sel = self.members["replica"] == i
            mem = {k: v[sel] for k, v in self.members.items()}
        return MartingaleDraw(float(self.W[i]), self.Z[i], None if w is None else self.Zw(w)[i], self.Wstar[i],
                              int(self.node_count[i]), float(self.discarded[i]), self.depth, self.level,
                              bool(self.truncated[i]), mem)


def complex_to_matrix(z):
    z = np.asarray(z)
    return np.stack([np.stack([z.real, -z.imag], -1), np.stack([z.imag, z.real], -1)], -2)


class _Chunk:
    __slots__ = ("depth", "keys", "rep", "S", "Sprev", "O", "mult", "L", "La")

    def __init__(self, depth, keys, rep, S, Sprev, O, mult=None, L=None, La=None):
        self.depth, self.keys, self.rep, self.S, self.Sprev, self.O = depth, keys, rep, S, Sprev, O
        self.mult = np.ones(len(rep)) if mult is None else mult
        # running products of |T| and |T|^alpha; exp(-S) would lose exactness
        self.L = np.ones(len(rep)) if L is None else L
        self.La = np.ones(len(rep)) if La is None else La

    def take(self, idx):
        return _Chunk(self.depth, self.keys[idx], self.rep[idx], self.S[idx], self.Sprev[idx], self.O[idx],
                      self.mult[idx], self.L[idx], self.La[idx])

    def merged(self):
        """Collapse nodes with equal (replica, S, S_prev, O) into one with multiplicity.

        Only valid when the weight family does not depend on the node stream.
        """
        O = self.O.reshape(len(self), -1)
        parts = [self.rep[:, None].astype(float), self.S[:, None], self.Sprev[:, None]]
        parts += [O.real, O.imag] if np.iscomplexobj(O) else [O]
        key = np.round(np.concatenate(parts, axis=1), 11)
        _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
        mult = np.bincount(inv.ravel(), weights=self.mult)
        out = self.take(first)
        out.mult = mult
        return out

    def __len__(self):
        return self.rep.shape[0]


def _bc(rep, w, R):
    return np.bincount(rep, weights=w, minlength=R)


def _run_block(model, alpha, cfg, rep0, R, leaf_fns, record_members, complex_path):
    d = model.dim
    line = cfg.mode == "line"
    n = cfg.max_depth if not line else 0
    t = cfg.level
    D = n + 1
    nf = len(leaf_fns)
    Wd = np.zeros((R, D))
    Zd = np.zeros((R, D), complex) if complex_path else np.zeros((R, D, d, d))
    Wsd = np.zeros((R, D, d)) if not line else np.zeros((R, 1, d))
    leaf = np.zeros((R, nf))
    nodes = np.zeros(R)  # tree nodes represented
    work = np.zeros(R, np.int64)  # nodes actually stored (differs under aggregation)
    disc = np.zeros(R)
    dead = np.zeros(R, bool)
    mem = {k: [] for k in ("replica", "S_prev", "S", "depth", "O")} if record_members else None
    Wl = np.zeros(R)
    Zl = np.zeros(R, complex) if complex_path else np.zeros((R, d, d))
    max_depth_seen = 0
    aggregate = bool(getattr(model, "deterministic", False))

    keys = rng.root_keys(cfg.seed, R, rep0)
    O0 = np.ones(R, complex) if complex_path else np.tile(np.eye(d), (R, 1, 1))
    stack = [_Chunk(0, keys, np.arange(R), np.zeros(R), np.zeros(R), O0)]

    def add_Z(acc, k, rep, wt, O):
        if complex_path:
            v = wt * O
            if k is None:
                acc += _bc(rep, v.real, R) + 1j * _bc(rep, v.imag, R)
            else:
                acc[:, k] += _bc(rep, v.real, R) + 1j * _bc(rep, v.imag, R)
        else:
            for i in range(d):
                for j in range(d):
                    v = _bc(rep, wt * O[:, i, j], R)
                    if k is None:
                        acc[:, i, j] += v
                    else:
                        acc[:, k, i, j] += v

    while stack:
        ch = stack.pop()
        if dead.any():
            ch = ch.take(~dead[ch.rep])
            if len(ch) == 0:
                continue
        k = ch.depth
        max_depth_seen = max(max_depth_seen, k)
        nodes += np.bincount(ch.rep, weights=ch.mult, minlength=R)
        work += np.bincount(ch.rep, minlength=R)
        over = work > cfg.max_nodes
        if over.any():
            dead |= over
            ch = ch.take(~dead[ch.rep])
            if len(ch) == 0:
                continue
        L = ch.L * ch.mult
        La = ch.La * ch.mult
        if not line:
            Wd[:, k] += _bc(ch.rep, La, R)
            add_Z(Zd, k, ch.rep, L, ch.O)
            if k == n:
                for i, f in enumerate(leaf_fns):
                    leaf[:, i] += _bc(ch.rep, La * f(ch.Sprev, ch.S, ch.O), R)
                continue
            expand = ch
        else:
            crossed = ch.S > t if k > 0 else np.zeros(len(ch), bool)
            if crossed.any():
                c = ch.take(crossed)
                Wl[:] += _bc(c.rep, c.mult * c.La, R)
                add_Z(Zl, None, c.rep, c.mult * c.L, c.O)
                for i, f in enumerate(leaf_fns):
                    leaf[:, i] += _bc(c.rep, c.mult * c.La * f(c.Sprev, c.S, c.O), R)
                if record_members:
                    mem["replica"].append(c.rep + rep0)
                    mem["S_prev"].append(c.Sprev)
                    mem["S"].append(c.S)
                    mem["depth"].append(np.full(len(c), k))
                    mem["O"].append(c.O)
            expand = ch.take(~crossed)
            L = L[~crossed]
            if len(expand) == 0:
                continue
        if cfg.prune:
            small = expand.La < cfg.eps_prune
            if small.any():
                disc += _bc(expand.rep[small], PRUNE_FACTOR * expand.mult[small] * expand.La[small], R)
                L = L[~small]
                expand = expand.take(~small)
                if len(expand) == 0:
                    continue
        fb = model.families(expand.keys)
        # W* picks up L(v) C(v) from the node's own family
        if not model.homogeneous:
            if complex_path:
                LC = (L * expand.O) * (fb.C[:, 0] + 1j * fb.C[:, 1])
                cv = np.stack([LC.real, LC.imag], 1)
            else:
                cv = L[:, None] * np.einsum("kij,kj->ki", expand.O, fb.C)
            col = 0 if line else k
            for i in range(d):
                Wsd[:, col, i] += _bc(expand.rep, cv[:, i], R)
        p, j = np.nonzero(fb.scale > 0)
        if p.size == 0:
            continue
        sc = fb.scale[p, j]
        cS = expand.S[p] - np.log(sc)
        if complex_path:
            cO = expand.O[p] * fb.unit[p, j]
            if (k + 1) % REORTH_EVERY == 0:
                cO = cO / np.abs(cO)
        else:
            cO = expand.O[p] @ fb.rotations()[p, j]
            if (k + 1) % REORTH_EVERY == 0 or np.max(np.abs(np.einsum("kij,kil->kjl", cO[:8], cO[:8]) - np.eye(d))) > 1e-10:
                cO = polar_project_batch(cO)
        child = _Chunk(k + 1, rng.child_keys(expand.keys[p], j), expand.rep[p], cS, expand.S[p], cO, expand.mult[p],
                       expand.L[p] * sc, expand.La[p] * sc ** alpha)
        if aggregate:
            child = child.merged()
        m = len(child)
        if m > cfg.chunk:
            for s in reversed(range(0, m, cfg.chunk)):
                stack.append(child.take(slice(s, s + cfg.chunk)))
        else:
            stack.append(child)
    out = dict(Wd=Wd, Zd=Zd, Wsd=Wsd, leaf=leaf, nodes=nodes, disc=disc, dead=dead, Wl=Wl, Zl=Zl,
               depth=max_depth_seen)
    if record_members:
        out["mem"] = {kk: (np.concatenate(v) if v else np.zeros((0,) + ((() if complex_path else (d, d)) if kk == "O" else ())))
                      for kk, v in mem.items()}
    return out


def simulate_replicas(model, alpha, cfg, replicas=1, leaf_fns: Sequence = (), record_members=False):
    """Run `replicas` independent trees; replica i uses stream (cfg.seed, i)."""
    if replicas < 1:
        raise DomainError("replicas must be >= 1")
    complex_path = bool(model.is_complex)
    blocks = [(s, min(cfg.block, replicas - s)) for s in range(0, replicas, cfg.block)]

    def job(b):
        return _run_block(model, alpha, cfg, b[0], b[1], list(leaf_fns), record_members, complex_path)

    if cfg.threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            res = list(ex.map(job, blocks))
    else:
        res = [job(b) for b in blocks]
    cat = lambda key: np.concatenate([r[key] for r in res], axis=0)
    d = model.dim
    truncated = cat("dead")
    if truncated.any():
        msg = f"max_nodes={cfg.max_nodes} exceeded in {int(truncated.sum())} replica(s); results are partial"
        if cfg.strict:
            raise NodeLimitError(msg, partial=None)
        warnings.warn(msg, NodeLimitWarning, stacklevel=2)
    kw = {}
    if cfg.mode == "depth":
        n = cfg.max_depth
        Wd, Zd, Wsd = cat("Wd"), cat("Zd"), cat("Wsd")
        Ws_by = np.concatenate([np.zeros((Wsd.shape[0], 1, d)), np.cumsum(Wsd, axis=1)[:, :-1]], axis=1)
        if complex_path:
            kw.update(Zc=Zd[:, n], Zc_by_depth=Zd)
            Zm_by = complex_to_matrix(Zd)
        else:
            Zm_by = Zd
        batch = MartingaleBatch(cfg.seed, n, None, Wd[:, n], Zm_by[:, n], Ws_by[:, n], cat("nodes"), cat("disc"),
                                truncated, Wd, Zm_by, Ws_by, cat("leaf"), None, **kw)
    else:
        Zl = cat("Zl")
        if complex_path:
            kw.update(Zc=Zl)
            Zm = complex_to_matrix(Zl)
        else:
            Zm = Zl
        mem = None
        if record_members:
            mem = {k: np.concatenate([r["mem"][k] for r in res], axis=0) for k in res[0]["mem"]}
        batch = MartingaleBatch(cfg.seed, max(r["depth"] for r in res), cfg.level, cat("Wl"), Zm, cat("Wsd")[:, 0],
                                cat("nodes"), cat("disc"), truncated, leaf_sums=cat("leaf"), members=mem, **kw)
    return batch


def simulate_joint(model, alpha, cfg, w=None):
    """One coupled realization of (W_n, Z_n, Z_n w, W*_n) for root seed cfg.seed."""
    if cfg.mode != "depth":
        raise DomainError("simulate_joint needs max_depth; use simulate_stopping_line for levels")
    b = simulate_replicas(model, alpha, cfg, 1)
    return b.draw(0, w)


def simulate_stopping_line(model, alpha, t, cfg=None, replicas=1, record_members=True, leaf_fns=()):
    """W over the stopping line C(t) = {v : S(v) > t >= S(ancestors)}."""
    if t < 0:
        raise DomainError("t must be >= 0")
    if cfg is None:
        cfg = BranchingConfig(level=t)
    elif cfg.mode != "line" or cfg.level != t:
        cfg = BranchingConfig(level=t, max_nodes=cfg.max_nodes, seed=cfg.seed, prune=cfg.prune,
                              eps_prune=cfg.eps_prune, chunk=cfg.chunk, block=cfg.block, threads=cfg.threads,
                              strict=cfg.strict)
    b = simulate_replicas(model, alpha, cfg, replicas, leaf_fns=leaf_fns, record_members=record_members)
    if record_members and len(b.members["S"]):
        assert np.all(b.members["S"] > t)
        assert np.all(b.members["S_prev"] <= t)
    return b


# ---------------------------------------------------------- many-to-one walk


@dataclass
class WalkPaths:
    S: np.ndarray  # (P, n+1)
    O: np.ndarray  # (P, n+1) complex or (P, n+1, d, d)
    weight: np.ndarray  # (P,)
    dead_restarts: int
    W1: np.ndarray  # (P, n)


def many_to_one_walk(model, alpha, n_steps, seed=0, n_paths=1, max_restarts=1000):
    """Size-biased walk: pick child J with prob |T_J|^alpha / W_1 each step.

    The importance weight prod W_1 makes weighted path averages unbiased for
    E[sum_{|v|=n} ||L(v)||^alpha f(path)].  A dead family (W_1 = 0) zeroes the
    path weight; the step is redrawn so the path stays defined (counted).
    """
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1")
    P = int(n_paths)
    d = model.dim
    cpx = bool(model.is_complex)
    keys = rng.root_keys(seed, P)
    S = np.zeros((P, n_steps + 1))
    O = np.ones((P, n_steps + 1), complex) if cpx else np.tile(np.eye(d), (P, n_steps + 1, 1, 1))
    wt = np.ones(P)
    W1s = np.zeros((P, n_steps))
    restarts = 0
    for k in range(n_steps):
        kk = rng.child_keys(keys, np.full(P, k))
        fb = model.families(kk)
        sa = np.where(fb.scale > 0, fb.scale, 0.0) ** alpha
        W1 = sa.sum(axis=1)
        deadm = W1 <= 0
        wt = np.where(deadm, 0.0, wt * W1)
        W1s[:, k] = W1
        tries = 0
        while deadm.any():
            restarts += int(deadm.sum())
            tries += 1
            if tries > max_restarts:
                raise DomainError("weight families keep dying; cannot continue the walk")
            alt = model.families(rng.child_keys(kk[deadm], np.full(int(deadm.sum()), 10_000 + tries)))
            idx = np.nonzero(deadm)[0]
            fb.scale[idx] = alt.scale
            if cpx:
                fb.unit[idx] = alt.unit
            else:
                fb.rot = fb.rotations().copy()
                fb.rot[idx] = alt.rotations()
            sa[idx] = np.where(alt.scale > 0, alt.scale, 0.0) ** alpha
            W1[idx] = sa[idx].sum(axis=1)
            deadm = W1 <= 0
        u = rng.uniforms(kk, 1, start=1_000_000)[:, 0]
        cdf = np.cumsum(sa, axis=1) / W1[:, None]
        J = np.minimum((cdf < u[:, None]).sum(axis=1), fb.width - 1)
        # guard against landing on a padded zero slot
        J = np.where(sa[np.arange(P), J] > 0, J, np.argmax(sa, axis=1))
        sJ = fb.scale[np.arange(P), J]
        S[:, k + 1] = S[:, k] - np.log(sJ)
        if cpx:
            O[:, k + 1] = O[:, k] * fb.unit[np.arange(P), J]
        else:
            O[:, k + 1] = O[:, k] @ fb.rotations()[np.arange(P), J]
    return WalkPaths(S, O, wt, restarts, W1s)


# --------------------------------------------------------------- W surrogate


@dataclass
class WEstimate:
    W: np.ndarray
    mean: float
    se: float
    z_mean_one: float
    var_by_depth: np.ndarray
    mean_by_depth: np.ndarray
    se_by_depth: np.ndarray
    plateau: bool
    diverging: bool
    discarded_mass_bound: float


def estimate_W(model, alpha, cfg, replicas=10_000, batch=None):
    """W_n (or W over C(t)) as the surrogate for the limit W, with diagnostics."""
    b = batch if batch is not None else simulate_replicas(model, alpha, cfg, replicas)
    W = b.W
    R = len(W)
    mean = float(W.mean())
    se = float(W.std(ddof=1) / math.sqrt(R)) if R > 1 else math.nan
    if b.W_by_depth is not None:
        vb = b.W_by_depth.var(axis=0, ddof=1)
        mb = b.W_by_depth.mean(axis=0)
        sb = b.W_by_depth.std(axis=0, ddof=1) / math.sqrt(R)
    else:
        vb, mb, sb = np.array([W.var(ddof=1)]), np.array([mean]), np.array([se])
    tail = vb[-4:] if len(vb) >= 4 else vb
    ratios = tail[1:] / np.maximum(tail[:-1], 1e-300) if len(tail) > 1 else np.array([1.0])
    diverging = bool(len(ratios) >= 2 and np.all(ratios > 1.5))
    plateau = bool(len(vb) < 3 or abs(vb[-1] - vb[-2]) <= 0.25 * max(vb[-1], 1e-300) + 1e-12)
    z = (mean - 1.0) / se if se and se > 0 else (0.0 if mean == 1.0 else math.inf)
    return WEstimate(W, mean, se, float(z), vb, mb, sb, plateau, diverging, float(b.discarded.sum()))

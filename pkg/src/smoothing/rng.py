"""Counter-based random streams keyed by tree position.

Every node of a branching tree gets a 128-bit key (two uint64 lanes) computed
by hashing its parent key with the child index.  Uniforms for a node are a
pure function of (key, counter), so the realization of a tree does not depend
on traversal order, batching or thread count.
"""
import numpy as np

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_G1 = np.uint64(0x9E3779B97F4A7C15)
_G2 = np.uint64(0xD1B54A32D192ED03)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO53 = 1.0 / 9007199254740992.0


def _mix(z):
    # splitmix64 finalizer, wraps mod 2**64
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def root_key(seed, *path):
    """Key for the node reached from `seed` along the integer labels `path`."""
    s = int(seed) & 0xFFFFFFFFFFFFFFFF
    k = np.array([[s, s ^ 0x5851F42D4C957F2D]], dtype=np.uint64)
    with np.errstate(over="ignore"):
        k[:, 0] = _mix(k[:, 0] + _G1)
        k[:, 1] = _mix(_mix(k[:, 1] + _G2) ^ k[:, 0])
    for label in path:
        k = child_keys(k, np.array([label]))
    return k[0]


def root_keys(seed, n, offset=0):
    """Keys for replicas ``offset, ..., offset+n-1`` of a run with root `seed`."""
    base = root_key(seed)[None, :].repeat(n, axis=0)
    idx = np.arange(offset, offset + n, dtype=np.int64)
    return child_keys(base, idx)


def child_keys(keys, j):
    """Keys of children ``j`` (int array) of the nodes with keys ``keys`` (M, 2)."""
    keys = np.asarray(keys, dtype=np.uint64)
    j = np.asarray(j, dtype=np.int64).astype(np.uint64) + np.uint64(1)
    out = np.empty_like(keys)
    with np.errstate(over="ignore"):
        a = _mix(keys[:, 0] ^ _mix(j * _G1))
        b = _mix(keys[:, 1] + _mix(j * _G2 ^ keys[:, 0]))
        out[:, 0] = a
        out[:, 1] = _mix(b ^ a)
    return out


def uniforms(keys, n, start=0):
    """(M, n) array of uniforms in the open interval (0, 1)."""
    keys = np.asarray(keys, dtype=np.uint64)
    c = np.arange(start + 1, start + n + 1, dtype=np.uint64)[None, :]
    with np.errstate(over="ignore"):
        x = _mix(keys[:, :1] + c * _G1) ^ _mix(keys[:, 1:] ^ (c * _G2))
    return ((x >> _S11).astype(np.float64) + 0.5) * _TWO53


def normals(keys, n, start=0):
    """Standard normals by Box-Muller, consuming 2*ceil(n/2) counters."""
    m = (n + 1) // 2
    u = uniforms(keys, 2 * m, start)
    r = np.sqrt(-2.0 * np.log(u[:, :m]))
    t = 2.0 * np.pi * u[:, m:]
    z = np.concatenate([r * np.cos(t), r * np.sin(t)], axis=1)
    return z[:, :n]


def generator(seed, *tags):
    """A numpy Generator for non-tree sampling, split off by integer tags."""
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(t) for t in tags))
    return np.random.Generator(np.random.Philox(ss))

"""Hot loops of the block builder, in two interchangeable flavours.

Every kernel exists as a loop-style function compiled with ``numba.njit`` and as
a vectorised numpy function. The numba path is used unless the environment
variable ``U1CORR_NUMBA`` is set to ``0``/``false``/``no`` or numba cannot be
imported. Both paths produce bit-identical integer output and equal complex
output up to summation order.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def _flag_enabled() -> bool:
    raw = os.environ.get("U1CORR_NUMBA", "1").strip().lower()
    return raw not in {"0", "false", "no", "off"}


NUMBA_ENABLED = numba is not None and _flag_enabled()


def _identity(fn):
    return fn


# helpers called from inside other loop kernels must be compiled themselves
_inner = numba.njit(cache=True, nogil=True) if numba is not None else _identity


# ---------------------------------------------------------------------------
# loop kernels (compiled when numba is on)
# ---------------------------------------------------------------------------

@_inner
def _count_compositions_loop(n, caps):
    S = caps.shape[0]
    # ways[k, r]: number of fillings of sites k..S-1 holding exactly r quanta
    ways = np.zeros((S + 1, n + 1), dtype=np.int64)
    ways[S, 0] = 1
    for k in range(S - 1, -1, -1):
        for r in range(n + 1):
            total = 0
            top = min(caps[k], r)
            for q in range(top + 1):
                total += ways[k + 1, r - q]
            ways[k, r] = total
    return ways


def _enumerate_loop(n, caps):
    S = caps.shape[0]
    ways = _count_compositions_loop(n, caps)
    dim = ways[0, n] if S > 0 else (1 if n == 0 else 0)
    out = np.zeros((dim, S), dtype=np.int64)
    if dim == 0 or S == 0:
        return out
    occ = np.zeros(S, dtype=np.int64)
    remaining = n
    for k in range(S):
        q = min(caps[k], remaining)
        occ[k] = q
        remaining -= q
    for row in range(dim):
        for k in range(S):
            out[row, k] = occ[k]
        if row == dim - 1:
            break
        # rightmost site that can hand one quantum to a later site
        free_right = 0
        held_right = 0
        pivot = -1
        for k in range(S - 1, -1, -1):
            if occ[k] > 0 and free_right > 0:
                pivot = k
                break
            free_right += caps[k] - occ[k]
            held_right += occ[k]
        occ[pivot] -= 1
        remaining = held_right + 1
        for k in range(pivot + 1, S):
            q = min(caps[k], remaining)
            occ[k] = q
            remaining -= q
    return out


def _keys_loop(states, n_sites):
    dim = states.shape[0]
    keys = np.zeros(dim, dtype=np.int64)
    for row in range(dim):
        key = 0
        weight = 1
        for k in range(n_sites):
            for _ in range(states[row, k]):
                key += k * weight
                weight *= n_sites
        keys[row] = key
    return keys


@_inner
def _state_key(occ, n_sites):
    key = 0
    weight = 1
    for k in range(n_sites):
        for _ in range(occ[k]):
            key += k * weight
            weight *= n_sites
    return key


def _lowering_loop(states_hi, site, is_qubit, sorted_lo, order_lo):
    dim_hi, S = states_hi.shape
    rows = np.empty(dim_hi, dtype=np.int64)
    cols = np.empty(dim_hi, dtype=np.int64)
    vals = np.empty(dim_hi, dtype=np.complex128)
    occ = np.zeros(S, dtype=np.int64)
    m = 0
    for col in range(dim_hi):
        q = states_hi[col, site]
        if q == 0:
            continue
        for k in range(S):
            occ[k] = states_hi[col, k]
        occ[site] -= 1
        key = _state_key(occ, S)
        rows[m] = order_lo[np.searchsorted(sorted_lo, key)]
        cols[m] = col
        vals[m] = 1.0 if is_qubit else np.sqrt(q)
        m += 1
    return rows[:m], cols[:m], vals[:m]


def _hopping_loop(states, sorted_keys, order, src, dst, amp, qubit):
    # triplets of sum_t amp[t] * o_dst^dagger o_src; the caller adds conjugate terms
    dim, S = states.shape
    cap = dim * src.shape[0]
    rows = np.empty(cap, dtype=np.int64)
    cols = np.empty(cap, dtype=np.int64)
    vals = np.empty(cap, dtype=np.complex128)
    occ = np.zeros(S, dtype=np.int64)
    m = 0
    for col in range(dim):
        for t in range(src.shape[0]):
            i = dst[t]
            j = src[t]
            qj = states[col, j]
            qi = states[col, i]
            if qj == 0:
                continue
            if qubit[i] and qi > 0:
                continue
            for k in range(S):
                occ[k] = states[col, k]
            occ[j] -= 1
            occ[i] += 1
            key = _state_key(occ, S)
            val = amp[t]
            if not qubit[j]:
                val = val * np.sqrt(qj)
            if not qubit[i]:
                val = val * np.sqrt(qi + 1)
            rows[m] = order[np.searchsorted(sorted_keys, key)]
            cols[m] = col
            vals[m] = val
            m += 1
    return rows[:m], cols[:m], vals[:m]


# ---------------------------------------------------------------------------
# numpy fallbacks
# ---------------------------------------------------------------------------

def _enumerate_numpy(n, caps):
    caps = np.asarray(caps, dtype=np.int64)
    S = caps.shape[0]
    if S == 0:
        return np.zeros((1 if n == 0 else 0, 0), dtype=np.int64)

    def fill(k, r):
        if k == S - 1:
            if r <= caps[k]:
                return np.array([[r]], dtype=np.int64)
            return np.zeros((0, 1), dtype=np.int64)
        blocks = []
        for q in range(min(caps[k], r), -1, -1):
            tail = fill(k + 1, r - q)
            if tail.shape[0]:
                head = np.full((tail.shape[0], 1), q, dtype=np.int64)
                blocks.append(np.hstack([head, tail]))
        if not blocks:
            return np.zeros((0, S - k), dtype=np.int64)
        return np.vstack(blocks)

    return fill(0, n)


def _keys_numpy(states, n_sites):
    dim = states.shape[0]
    if dim == 0:
        return np.zeros(0, dtype=np.int64)
    n = int(states[0].sum())
    if n == 0:
        return np.zeros(dim, dtype=np.int64)
    labels = np.repeat(np.tile(np.arange(n_sites, dtype=np.int64), dim), states.ravel())
    labels = labels.reshape(dim, n)
    weights = n_sites ** np.arange(n, dtype=np.int64)
    return labels @ weights


def _lowering_numpy(states_hi, site, is_qubit, sorted_lo, order_lo):
    S = states_hi.shape[1]
    cols = np.nonzero(states_hi[:, site] > 0)[0]
    moved = states_hi[cols].copy()
    q = moved[:, site].copy()
    moved[:, site] -= 1
    rows = order_lo[np.searchsorted(sorted_lo, _keys_numpy(moved, S))]
    vals = np.ones(cols.size, dtype=np.complex128) if is_qubit else np.sqrt(q).astype(np.complex128)
    return rows.astype(np.int64), cols.astype(np.int64), vals


def _hopping_numpy(states, sorted_keys, order, src, dst, amp, qubit):
    S = states.shape[1]
    rows, cols, vals = [], [], []
    for i, j, a in zip(dst, src, amp):
        ok = states[:, j] > 0
        if qubit[i]:
            ok &= states[:, i] == 0
        c = np.nonzero(ok)[0]
        moved = states[c].copy()
        qj = moved[:, j].copy()
        qi = moved[:, i].copy()
        moved[:, j] -= 1
        moved[:, i] += 1
        val = np.full(c.size, a, dtype=np.complex128)
        if not qubit[j]:
            val *= np.sqrt(qj)
        if not qubit[i]:
            val *= np.sqrt(qi + 1)
        rows.append(order[np.searchsorted(sorted_keys, _keys_numpy(moved, S))])
        cols.append(c)
        vals.append(val)
    if not rows:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.complex128)
    return (np.concatenate(rows).astype(np.int64), np.concatenate(cols).astype(np.int64),
            np.concatenate(vals))


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if numba is not None:
    _jit = numba.njit(cache=True, nogil=True)
    _enumerate_nb = _jit(_enumerate_loop)
    _keys_nb = _jit(_keys_loop)
    _lowering_nb = _jit(_lowering_loop)
    _hopping_nb = _jit(_hopping_loop)
else:  # pragma: no cover
    _enumerate_nb = _keys_nb = _lowering_nb = _hopping_nb = None


NUMPY_KERNELS = {
    "enumerate": _enumerate_numpy,
    "keys": _keys_numpy,
    "lowering": _lowering_numpy,
    "hopping": _hopping_numpy,
}

NUMBA_KERNELS = {
    "enumerate": _enumerate_nb,
    "keys": _keys_nb,
    "lowering": _lowering_nb,
    "hopping": _hopping_nb,
} if numba is not None else {}


def backend() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


def _kernels():
    return NUMBA_KERNELS if NUMBA_ENABLED else NUMPY_KERNELS


def enumerate_occupations(n: int, caps: np.ndarray) -> np.ndarray:
    """All occupation vectors with total ``n`` and ``occ[k] <= caps[k]``,
    in descending lexicographic order."""
    caps = np.ascontiguousarray(np.minimum(caps, n), dtype=np.int64)
    return _kernels()["enumerate"](int(n), caps)


def state_keys(states: np.ndarray, n_sites: int) -> np.ndarray:
    """Integer key of each row: occupied site labels read as base-``n_sites`` digits."""
    return _kernels()["keys"](np.ascontiguousarray(states, dtype=np.int64), int(n_sites))


def _scatter(shape, triplets) -> np.ndarray:
    # np.zeros hands back lazily zeroed pages, so only touched rows cost memory traffic
    rows, cols, vals = triplets
    out = np.zeros(shape, dtype=np.complex128)
    np.add.at(out, (rows, cols), vals)
    return out


def lowering_triplets(states_hi, site, is_qubit, sorted_lo, order_lo):
    """Nonzero entries ``(rows, cols, values)`` of one site's lowering operator."""
    return _kernels()["lowering"](
        np.ascontiguousarray(states_hi, dtype=np.int64), int(site), bool(is_qubit),
        np.ascontiguousarray(sorted_lo, dtype=np.int64),
        np.ascontiguousarray(order_lo, dtype=np.int64),
    )


def hopping_triplets(states, sorted_keys, order, src, dst, amp, qubit):
    return _kernels()["hopping"](
        np.ascontiguousarray(states, dtype=np.int64),
        np.ascontiguousarray(sorted_keys, dtype=np.int64),
        np.ascontiguousarray(order, dtype=np.int64),
        np.ascontiguousarray(src, dtype=np.int64),
        np.ascontiguousarray(dst, dtype=np.int64),
        np.ascontiguousarray(amp, dtype=np.complex128),
        np.ascontiguousarray(qubit, dtype=np.bool_),
    )


def lowering_matrix(states_hi, site, is_qubit, sorted_lo, order_lo, dim_lo):
    return _scatter((dim_lo, len(states_hi)), lowering_triplets(states_hi, site, is_qubit, sorted_lo, order_lo))


def hopping_matrix(states, sorted_keys, order, src, dst, amp, qubit):
    """Matrix of ``sum_t amp[t] * o_{dst[t]}^dagger o_{src[t]}`` on one subspace."""
    dim = len(states)
    return _scatter((dim, dim), hopping_triplets(states, sorted_keys, order, src, dst, amp, qubit))

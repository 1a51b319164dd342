"""Excitation-number subspaces and the dense blocks living on them.

Subspace ``n`` is spanned by occupation vectors with ``n`` quanta in total,
qubits holding at most one. States are ordered lexicographically descending in
the model's site order, so for a cavity followed by an emitter the basis of
subspace ``n`` is ``|n, g>, |n-1, e>``.
"""
from __future__ import annotations

import csv
import threading
from dataclasses import dataclass

import numpy as np

from . import _accel
from .errors import ModelError
from .model import SystemModel, channel_lowering_coefficients, dissipation_matrix, require_u1


@dataclass(frozen=True, eq=False)
class ExcitationBasis:
    n: int
    states: np.ndarray
    _sorted_keys: np.ndarray
    _order: np.ndarray

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    def __len__(self):
        return self.dim

    def index(self, occupations) -> int:
        occ = np.asarray(occupations, dtype=np.int64)
        if occ.shape != (self.states.shape[1],) or occ.sum() != self.n or (occ < 0).any():
            raise KeyError(tuple(occ))
        key = _accel.state_keys(occ[None, :], occ.size)[0]
        pos = int(np.searchsorted(self._sorted_keys, key))
        if pos >= self._sorted_keys.size or self._sorted_keys[pos] != key:
            raise KeyError(tuple(occ))
        return int(self._order[pos])


@dataclass(frozen=True, eq=False)
class BlockMatrix:
    rows: ExcitationBasis
    cols: ExcitationBasis
    data: np.ndarray

    def __post_init__(self):
        if self.data.shape != (self.rows.dim, self.cols.dim):
            raise ValueError("block shape does not match its bases")

    @property
    def shape(self):
        return self.data.shape

    def to_csv(self, fh) -> None:
        """Write nonzero entries as ``row,col,re,im`` lines."""
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "col", "re", "im"])
        for r, c in zip(*np.nonzero(self.data)):
            z = self.data[r, c]
            writer.writerow([int(r), int(c), repr(float(z.real)), repr(float(z.imag))])


def _caps(model: SystemModel, n: int) -> np.ndarray:
    return np.where(model.is_qubit, 1, n).astype(np.int64)


def _apply_term(occ: np.ndarray, raising, lowering, qubit) -> tuple[np.ndarray | None, float]:
    occ = occ.copy()
    amp = 1.0
    for k in reversed(lowering):
        if occ[k] == 0:
            return None, 0.0
        if not qubit[k]:
            amp *= np.sqrt(occ[k])
        occ[k] -= 1
    for k in reversed(raising):
        if qubit[k] and occ[k] == 1:
            return None, 0.0
        occ[k] += 1
        if not qubit[k]:
            amp *= np.sqrt(occ[k])
    return occ, amp


class BlockCache:
    """Lazily built, memoised bases and blocks for one model.

    Builds happen under a lock; finished arrays are marked read-only and shared.
    """

    def __init__(self, model: SystemModel):
        self.model = model
        self._lock = threading.RLock()
        self._store: dict[tuple, object] = {}

    def _memo(self, key, build):
        hit = self._store.get(key)
        if hit is not None:
            return hit
        with self._lock:
            hit = self._store.get(key)
            if hit is None:
                hit = build()
                if isinstance(hit, BlockMatrix):
                    hit.data.setflags(write=False)
                self._store[key] = hit
            return hit

    def basis(self, n: int) -> ExcitationBasis:
        if n < 0:
            raise ModelError("excitation number must be non-negative")

        def build():
            S = len(self.model.sites)
            states = _accel.enumerate_occupations(n, _caps(self.model, n))
            keys = _accel.state_keys(states, S)
            order = np.argsort(keys, kind="stable")
            states.setflags(write=False)
            return ExcitationBasis(n, states, keys[order], order)

        return self._memo(("basis", n), build)

    def site_lowering(self, site: int, n: int) -> BlockMatrix:
        if n < 1:
            raise ModelError("lowering blocks need n >= 1")

        def build():
            hi, lo = self.basis(n), self.basis(n - 1)
            data = _accel.lowering_matrix(hi.states, site, self.model.is_qubit[site],
                                          lo._sorted_keys, lo._order, lo.dim)
            return BlockMatrix(lo, hi, data)

        return self._memo(("site", site, n), build)

    def channel_lowering(self, channel_id: str, n: int) -> BlockMatrix:
        def build():
            hi, lo = self.basis(n), self.basis(n - 1)
            data = np.zeros((lo.dim, hi.dim), dtype=complex)
            for k, xi in channel_lowering_coefficients(self.model, channel_id):
                data = data + xi * self.site_lowering(k, n).data
            return BlockMatrix(lo, hi, data)

        return self._memo(("channel", channel_id, n), build)

    def h_sys(self, n: int) -> BlockMatrix:
        def build():
            require_u1(self.model)
            m = self.model
            b = self.basis(n)
            freqs = np.array([s.frequency for s in m.sites], dtype=float)
            data = np.diag((b.states @ freqs).astype(complex)) if b.dim else np.zeros((0, 0), complex)
            if m.couplings and b.dim:
                src, dst, amp = [], [], []
                for c in m.couplings:
                    i, j = m.site_index(c.site_i), m.site_index(c.site_j)
                    src += [j, i]
                    dst += [i, j]
                    amp += [c.amplitude, c.amplitude.conjugate()]
                data = data + _accel.hopping_matrix(b.states, b._sorted_keys, b._order,
                                                    np.array(src), np.array(dst), np.array(amp), m.is_qubit)
            if m.extra_terms and b.dim:
                data = data + self._extra_terms(b)
            return BlockMatrix(b, b, data)

        return self._memo(("hsys", n), build)

    def _extra_terms(self, b: ExcitationBasis) -> np.ndarray:
        m = self.model
        qubit = m.is_qubit
        out = np.zeros((b.dim, b.dim), dtype=complex)
        for t in m.extra_terms:
            up = [m.site_index(s) for s in t.raising]
            down = [m.site_index(s) for s in t.lowering]
            variants = [(t.coefficient, up, down)]
            if t.add_conjugate:
                variants.append((t.coefficient.conjugate(), down[::-1], up[::-1]))
            for coeff, r, l in variants:
                for col in range(b.dim):
                    new, amp = _apply_term(b.states[col], r, l, qubit)
                    if new is not None:
                        out[b.index(new), col] += coeff * amp
        return out

    def h_eff(self, n: int) -> BlockMatrix:
        """``H_sys - (i/2) sum_ij D_ij o_i^+ o_j`` with ``D`` the dissipation matrix.

        Equal to subtracting ``(i/2) O^+ O`` per decaying channel, without the
        dense products.
        """
        def build():
            b = self.basis(n)
            data = np.array(self.h_sys(n).data, dtype=complex)
            if n >= 1 and b.dim:
                D = dissipation_matrix(self.model)
                loss = (b.states @ D.diagonal().real).astype(complex)
                data[np.diag_indices(b.dim)] -= 0.5j * loss
                off = [(i, j) for i, j in zip(*np.nonzero(D)) if i != j]
                if off:
                    dst, src = (np.array(x) for x in zip(*off))
                    data -= 0.5j * _accel.hopping_matrix(b.states, b._sorted_keys, b._order, src, dst,
                                                         D[dst, src], self.model.is_qubit)
            return BlockMatrix(b, b, data)

        return self._memo(("heff", n), build)


_CACHES_LOCK = threading.Lock()


def blocks_for(model: SystemModel) -> BlockCache:
    """The block cache attached to ``model`` (created on first use)."""
    cache = model.__dict__.get("_block_cache")
    if cache is None:
        with _CACHES_LOCK:
            cache = model.__dict__.get("_block_cache")
            if cache is None:
                cache = BlockCache(model)
                # frozen dataclass: bypass __setattr__, the cache is not a field
                model.__dict__["_block_cache"] = cache
    return cache


# -- functional surface ------------------------------------------------------

def enumerate_basis(model: SystemModel, n: int) -> ExcitationBasis:
    return blocks_for(model).basis(n)


def site_lowering_block(model: SystemModel, site: str | int, n: int) -> BlockMatrix:
    k = site if isinstance(site, int) else model.site_index(site)
    return blocks_for(model).site_lowering(k, n)


def channel_lowering_block(model: SystemModel, channel_id: str, n: int) -> BlockMatrix:
    return blocks_for(model).channel_lowering(channel_id, n)


def h_eff_block(model: SystemModel, n: int) -> BlockMatrix:
    return blocks_for(model).h_eff(n)


def h_sys_block(model: SystemModel, n: int) -> BlockMatrix:
    return blocks_for(model).h_sys(n)

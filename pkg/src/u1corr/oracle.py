"""Brute-force master-equation reference.

This module deliberately shares nothing with the resolvent engine except the
model description: it builds its own truncated Fock space, operators and
Liouvillian, and reads correlators straight off the density matrix.

Drives enter as ``H_d = sum_l (Omega_l o_l^dagger e^{-i w_l t} + h.c.)`` where
``o_l`` is the lowering operator of the drive's channel and
``Omega_l = drive_amplitude * relative_amplitude_l``. Everything is written in
a frame rotating at the first drive's frequency.

Weak drives make the density matrix span many orders of magnitude (the
n-excitation coherences scale as ``Omega^n``). To keep full relative precision
the Liouvillian is similarity-transformed with ``S = diag(s^N)``, ``s`` the
drive amplitude, and the solver works with ``rho~ = S^-1 rho S^-1``, whose
entries are O(1). All correlators are formed from ``rho~`` directly.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp
from scipy.linalg import lapack

from .errors import CutoffError, ModelError, OracleError
from .model import (
    DriveSpec,
    SystemModel,
    channel_lowering_coefficients,
    dissipation_matrix,
    require_u1,
)

DENSE_LIMIT = 4096
_NULLSPACE_CHECK_LIMIT = 1024
EDGE_POPULATION_LIMIT = 1e-8
UNDEFINED_THRESHOLD = 1e-30


@dataclass(frozen=True)
class FockCutoff:
    """Per-boson maximum occupation; ``total`` optionally caps the summed excitation number."""

    per_site: int | Mapping[str, int] = 5
    total: int | None = None

    def cap(self, site_id: str) -> int:
        if isinstance(self.per_site, Mapping):
            return int(self.per_site[site_id])
        return int(self.per_site)

    def smallest(self, model: SystemModel) -> int:
        caps = [self.cap(s.id) for s in model.sites if s.kind == "boson"]
        if self.total is not None:
            caps.append(self.total)
        return min(caps) if caps else math.inf

    def check_order(self, model: SystemModel, n: int) -> None:
        """Truncation must leave two levels of margin above the order being probed."""
        if self.smallest(model) < n + 2:
            raise CutoffError(f"cutoff {self.smallest(model)} is below order {n} + 2")


class FockSpace:
    """Truncated product basis with sparse lowering operators for every site."""

    def __init__(self, model: SystemModel, cutoff: FockCutoff):
        self.model = model
        self.cutoff = cutoff
        ranges = [range(2) if s.kind == "qubit" else range(cutoff.cap(s.id) + 1) for s in model.sites]
        states = [occ for occ in itertools.product(*ranges)
                  if cutoff.total is None or sum(occ) <= cutoff.total]
        states.sort(key=lambda o: (sum(o), o))
        self.states = np.array(states, dtype=np.int64).reshape(len(states), len(model.sites))
        self.index = {tuple(o): i for i, o in enumerate(states)}
        self.excitations = self.states.sum(axis=1)
        self.dim = len(states)
        self.lowering = [self._site_lowering(k) for k in range(len(model.sites))]
        edge = np.zeros(self.dim, dtype=bool)
        for k, s in enumerate(model.sites):
            if s.kind == "boson":
                edge |= self.states[:, k] == cutoff.cap(s.id)
        if cutoff.total is not None:
            edge |= self.excitations == cutoff.total
        self.edge = edge

    def _site_lowering(self, k: int) -> sp.csr_matrix:
        qubit = self.model.sites[k].kind == "qubit"
        rows, cols, vals = [], [], []
        for j, occ in enumerate(self.states):
            q = occ[k]
            if q == 0:
                continue
            lower = occ.copy()
            lower[k] -= 1
            rows.append(self.index[tuple(lower)])
            cols.append(j)
            vals.append(1.0 if qubit else math.sqrt(q))
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim), dtype=complex)

    def channel_op(self, channel_id: str) -> sp.csr_matrix:
        op = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for k, xi in channel_lowering_coefficients(self.model, channel_id):
            op = op + xi * self.lowering[k]
        return op.tocsr()

    def hamiltonian(self, omega_ref: float) -> sp.csr_matrix:
        require_u1(self.model)
        m = self.model
        freqs = np.array([s.frequency - omega_ref for s in m.sites])
        H = sp.diags((self.states @ freqs).astype(complex)).tocsr()
        for c in m.couplings:
            i, j = m.site_index(c.site_i), m.site_index(c.site_j)
            hop = c.amplitude * (self.lowering[i].getH() @ self.lowering[j])
            H = H + hop + hop.getH()
        for t in m.extra_terms:
            op = sp.identity(self.dim, dtype=complex, format="csr")
            for s in t.raising:
                op = op @ self.lowering[m.site_index(s)].getH()
            for s in t.lowering:
                op = op @ self.lowering[m.site_index(s)]
            op = t.coefficient * op
            H = H + op + (op.getH() if t.add_conjugate else 0)
        return H.tocsr()


def _left(A):
    # vec(A rho) with column stacking
    return sp.kron(sp.identity(A.shape[0], format="csr"), A, format="csr")


def _right(B):
    # vec(rho B)
    return sp.kron(B.T, sp.identity(B.shape[0], format="csr"), format="csr")


def _commutator(H):
    return -1j * (_left(H) - _right(H))


@dataclass
class Liouvillian:
    """Scaled generator ``L~(t) = L~_0 + sum_h exp(-i w_h t) L~_h`` on vectorised ``rho~``.

    ``h_eff`` and ``drive_up`` (the static raising part of the drive) are kept
    for the block preconditioner used on large spaces.
    """

    space: FockSpace
    scale: float
    static: sp.csr_matrix
    harmonics: list[tuple[float, sp.csr_matrix]] = field(default_factory=list)
    omega_ref: float = 0.0
    h_eff: sp.csr_matrix | None = None
    drive_up: sp.csr_matrix | None = None

    @property
    def dim(self) -> int:
        return self.space.dim

    def at(self, t: float) -> sp.csr_matrix:
        L = self.static
        for w, Lh in self.harmonics:
            L = L + np.exp(-1j * w * t) * Lh
        return L

    @property
    def trace_weights(self) -> np.ndarray:
        """Linear functional giving ``Tr rho`` from ``vec(rho~)``."""
        d = self.dim
        w = np.zeros(d * d)
        idx = np.arange(d)
        w[idx + idx * d] = self.scale ** (2.0 * self.space.excitations)
        return w


def _scaled(L: sp.spmatrix, N: np.ndarray, s: float, power: int) -> sp.csr_matrix:
    coo = L.tocoo()
    d = N.size
    ni, nj = N[coo.row % d], N[coo.row // d]
    nk, nl = N[coo.col % d], N[coo.col // d]
    expo = power + nk + nl - ni - nj
    keep = coo.data != 0
    if np.any(expo[keep] < 0):
        raise OracleError("internal: negative scaling exponent (operator does not respect the excitation ladder)")
    data = coo.data * np.power(float(s), expo.astype(float))
    return sp.csr_matrix((data, (coo.row, coo.col)), shape=coo.shape)


def build_liouvillian(model: SystemModel, drive_amplitude: float, cutoff: FockCutoff | int = 5,
                      drives: Sequence[DriveSpec] | None = None) -> Liouvillian:
    """Master-equation generator for ``model`` under its drives (or ``drives``).

    ``drive_amplitude`` multiplies every drive's relative amplitude. Unequal
    drive frequencies produce time-dependent harmonics for :func:`evolve`.
    """
    if not isinstance(cutoff, FockCutoff):
        cutoff = FockCutoff(int(cutoff))
    drives = tuple(model.drives if drives is None else drives)
    space = FockSpace(model, cutoff)
    omega_ref = drives[0].frequency if drives else 0.0
    if not float(drive_amplitude) >= 0:
        raise ModelError("drive amplitude must be non-negative")
    s = float(drive_amplitude) if drives and drive_amplitude != 0 else 1.0
    N = space.excitations

    H = space.hamiltonian(omega_ref)
    h_eff = H.copy()
    L0 = _commutator(H)
    for ch in model.channels:
        if ch.contributes_decay:
            o = space.channel_op(ch.id)
            odo = o.getH() @ o
            h_eff = h_eff - 0.5j * odo
            L0 = L0 + sp.kron(o.conj(), o) - 0.5 * _left(odo) - 0.5 * _right(odo)
    static = _scaled(L0, N, s, 0)
    drive_up = sp.csr_matrix((space.dim, space.dim), dtype=complex)

    groups: dict[float, sp.csr_matrix] = {}
    if drive_amplitude != 0:
        for d in drives:
            up = d.relative_amplitude * space.channel_op(d.channel).getH()
            delta = d.frequency - omega_ref
            if delta == 0.0:
                drive_up = drive_up + up
            for w, op in ((delta, up), (-delta, up.getH())):
                term = _scaled(_commutator(op.tocsr()), N, s, 1)
                groups[w] = groups[w] + term if w in groups else term
    harmonics = []
    for w, term in sorted(groups.items()):
        if w == 0.0:
            static = static + term
        else:
            harmonics.append((w, term.tocsr()))
    return Liouvillian(space, s, static.tocsr(), harmonics, omega_ref, h_eff.tocsr(), drive_up.tocsr())


class _LadderPreconditioner:
    """Exact inverse of the scale-free part of the static generator.

    With ``rho~`` split into blocks ``X_pq`` by the excitation numbers of row and
    column, the O(s^0) part of the scaled equation reads
    ``-i (H_p X_pq - X_pq H_q^dagger) - i (V X_{p-1,q} - X_{p,q-1} V^dagger) = R_pq``
    and is solved block by block in order of increasing ``p + q``, each block a
    triangular Sylvester equation in Schur coordinates. The vacuum block holds
    the normalisation. The remaining O(s^2) terms are left to the Krylov solver.
    """

    def __init__(self, L: Liouvillian):
        N = L.space.excitations
        self.d = L.dim
        self.sectors = [np.nonzero(N == p)[0] for p in range(int(N.max()) + 1)]
        H = L.h_eff.toarray()
        V = L.drive_up.toarray()
        self.schur = [sla.schur(H[np.ix_(I, I)], output="complex") for I in self.sectors]
        self.V = {p: V[np.ix_(self.sectors[p], self.sectors[p - 1])] for p in range(1, len(self.sectors))}

    def __call__(self, r: np.ndarray) -> np.ndarray:
        d, S = self.d, self.sectors
        R = np.asarray(r).reshape((d, d), order="F")
        X = np.zeros((d, d), dtype=complex)
        P = len(S)
        for total in range(2 * P - 1):
            for p in range(max(0, total - P + 1), min(total, P - 1) + 1):
                q = total - p
                Ip, Iq = S[p], S[q]
                if p == 0 and q == 0:
                    X[np.ix_(Ip, Iq)] = R[np.ix_(Ip, Iq)]
                    continue
                F = 1j * R[np.ix_(Ip, Iq)]
                if p >= 1:
                    F -= self.V[p] @ X[np.ix_(S[p - 1], Iq)]
                if q >= 1:
                    F += X[np.ix_(Ip, S[q - 1])] @ self.V[q].conj().T
                Tp, Qp = self.schur[p]
                Tq, Qq = self.schur[q]
                G = Qp.conj().T @ F @ Qq
                Y, scale, info = lapack.ztrsyl(Tp, Tq, G, trana="N", tranb="C", isgn=-1)
                if info < 0:
                    raise OracleError("internal: Sylvester solve rejected its arguments")
                X[np.ix_(Ip, Iq)] = Qp @ (Y / scale) @ Qq.conj().T
        return X.reshape(-1, order="F")


@dataclass(frozen=True)
class DensityMatrix:
    """Steady or instantaneous state kept in scaled form ``rho = S rho~ S / Z``."""

    scaled: np.ndarray
    scale: float
    excitations: np.ndarray
    edge: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return self.scale ** (1.0 * self.excitations)

    @property
    def norm(self) -> float:
        return float(np.real(np.sum(np.diag(self.scaled) * self.weights**2)))

    def matrix(self) -> np.ndarray:
        w = self.weights
        return (w[:, None] * self.scaled * w[None, :]) / self.norm

    @property
    def edge_population(self) -> float:
        p = np.real(np.diag(self.scaled)) * self.weights**2
        return float(p[self.edge].sum() / self.norm)

    def check_cutoff(self, limit: float = EDGE_POPULATION_LIMIT) -> None:
        if self.edge_population > limit:
            raise CutoffError(
                f"population {self.edge_population:.3e} at the truncation edge exceeds {limit:.0e}; raise the cutoff"
            )


def _as_state(L: Liouvillian, vec: np.ndarray) -> DensityMatrix:
    d = L.dim
    rho = vec.reshape((d, d), order="F")
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho, L.scale, L.space.excitations, L.space.edge)


def steady_state(L: Liouvillian, check_cutoff: bool = True) -> DensityMatrix:
    """Unique trace-one null vector of the (static) generator.

    The vacuum-vacuum equation is redundant under trace preservation and is
    replaced by the normalisation ``rho~[0, 0] = 1``.
    """
    if L.harmonics:
        raise OracleError("steady state needs a static generator (all drive frequencies equal)")
    d = L.dim
    D = d * d
    A = L.static.tocoo()
    if D <= _NULLSPACE_CHECK_LIMIT:
        sv = sla.svdvals(A.toarray())
        null = int(np.sum(sv <= 1e-12 * sv.max()))
        if null > 1:
            raise OracleError(f"steady state is not unique: null space has dimension {null}")
    keep = A.row != 0
    rows = np.concatenate([A.row[keep], [0]])
    cols = np.concatenate([A.col[keep], [0]])
    vals = np.concatenate([A.data[keep], [1.0]])
    M = sp.csc_matrix((vals, (rows, cols)), shape=(D, D))
    rhs = np.zeros(D, dtype=complex)
    rhs[0] = 1.0
    if D <= DENSE_LIMIT:
        Md = M.toarray()
        lu = sla.lu_factor(Md, check_finite=False)
        if not np.isfinite(lu[0]).all() or np.min(np.abs(np.diag(lu[0]))) == 0:
            raise OracleError("steady state is not unique (singular generator)")
        x = sla.lu_solve(lu, rhs)
    else:
        x = _krylov_steady_state(L, M.tocsr(), rhs)
    resid = np.linalg.norm(L.static @ x)
    scale = spla.norm(L.static, 1) * np.linalg.norm(x)
    if resid > 1e-10 * max(scale, 1.0):
        raise OracleError(f"steady-state residual {resid:.2e} exceeds tolerance")
    state = _as_state(L, x)
    if check_cutoff:
        state.check_cutoff()
    return state


def _krylov_steady_state(L: Liouvillian, M: sp.csr_matrix, rhs: np.ndarray) -> np.ndarray:
    pre = _LadderPreconditioner(L)
    D = M.shape[0]
    op = spla.LinearOperator((D, D), matvec=lambda v: M @ v, dtype=complex)
    prec = spla.LinearOperator((D, D), matvec=pre, dtype=complex)
    x, info = spla.gmres(op, rhs, x0=pre(rhs), M=prec, rtol=1e-14, atol=0.0, restart=50, maxiter=200)
    if info != 0 or not np.isfinite(x).all():
        raise OracleError("steady state solve did not converge (generator singular or ill-conditioned)")
    return x


def slowest_decay_time(model: SystemModel) -> float:
    """Inverse of the smallest single-excitation decay rate of the model."""
    S = len(model.sites)
    M = np.diag([s.frequency for s in model.sites]).astype(complex)
    for c in model.couplings:
        i, j = model.site_index(c.site_i), model.site_index(c.site_j)
        M[i, j] += c.amplitude
        M[j, i] += np.conj(c.amplitude)
    M -= 0.5j * dissipation_matrix(model).T
    rate = -np.linalg.eigvals(M).imag.max() if S else 0.0
    if not rate > 0:
        raise OracleError("the model has an undamped single-excitation mode; no steady regime exists")
    return 1.0 / rate


def evolve(L: Liouvillian, rho0: DensityMatrix | None, t_grid, t0: float = 0.0,
           rtol: float = 1e-10, atol: float = 1e-14, check_cutoff: bool = True) -> list[DensityMatrix]:
    """Integrate ``d rho~/dt = L~(t) rho~`` from ``t0`` and return states at ``t_grid`` (absolute times)."""
    d = L.dim
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0 or np.any(np.diff(t_grid) < 0) or t_grid[0] < t0:
        raise ModelError("time grid must be non-empty, sorted and start at or after t0")
    if rho0 is None:
        y0 = np.zeros(d * d, dtype=complex)
        y0[0] = 1.0
    else:
        y0 = np.asarray(rho0.scaled, dtype=complex).reshape(-1, order="F")
    static, harmonics = L.static, L.harmonics

    def rhs(t, y):
        out = static @ y
        for w, Lh in harmonics:
            out += np.exp(-1j * w * t) * (Lh @ y)
        return out

    sol = solve_ivp(rhs, (t0, float(t_grid[-1])), y0, method="DOP853", t_eval=t_grid,
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise OracleError(f"time integration failed: {sol.message}")
    states = [_as_state(L, sol.y[:, k]) for k in range(sol.y.shape[1])]
    if check_cutoff:
        for st in states:
            st.check_cutoff()
    return states


# -- correlators -----------------------------------------------------------------

@dataclass(frozen=True)
class OutputField:
    """Field leaving through ``channel``; with ``include_drive`` the coherent input
    of that channel is added: ``b_out = Omega * alpha - i o_channel``."""

    channel: str
    include_drive: bool = False


@dataclass(frozen=True)
class OracleValue:
    value: float | None
    n: int
    undefined: bool = False


class _FieldAlgebra:
    def __init__(self, L: Liouvillian, model: SystemModel, drives: Sequence[DriveSpec]):
        self.L = L
        self.model = model
        self.drives = tuple(drives)

    def scaled_op(self, spec: OutputField):
        """``S^-1 b S / s`` as a dense matrix: ``alpha - i o``."""
        o = self.L.space.channel_op(spec.channel).toarray()
        op = -1j * o
        if spec.include_drive:
            alpha = sum(d.relative_amplitude for d in self.drives if d.channel == spec.channel)
            op = op + alpha * np.eye(o.shape[0])
        return op


def _normalise_spec(spec, n: int | None) -> list[OutputField]:
    if isinstance(spec, (str, OutputField)):
        if n is None:
            raise ModelError("order n is required for a single monitored field")
        spec = [spec] * n
    fields = [s if isinstance(s, OutputField) else OutputField(str(s)) for s in spec]
    if n is not None and len(fields) != n:
        raise ModelError("number of monitored fields must equal the order")
    return fields


def correlator_from_state(rho: DensityMatrix, L: Liouvillian, model: SystemModel, spec, n: int | None = None,
                          drives: Sequence[DriveSpec] | None = None) -> OracleValue:
    """``<prod b_j^dagger prod b_j> / prod <b_j^dagger b_j>`` for the listed output fields.

    ``spec`` is a channel id (with ``n``), an :class:`OutputField`, or a list of
    either, one per detected photon.
    """
    fields = _normalise_spec(spec, n)
    alg = _FieldAlgebra(L, model, model.drives if drives is None else drives)
    w2 = rho.weights**2
    Z = rho.norm

    def moment(ops):
        C = np.eye(rho.scaled.shape[0], dtype=complex)
        for op in ops:
            C = op @ C
        # Tr[C^dagger S^2 C rho~]
        return float(np.real(np.trace(C.conj().T @ (w2[:, None] * (C @ rho.scaled)))))

    ops = [alg.scaled_op(f) for f in fields]
    singles = [moment([op]) / Z for op in ops]
    order = len(fields)
    if min(singles) < UNDEFINED_THRESHOLD:
        return OracleValue(None, order, True)
    joint = moment(ops) / Z
    return OracleValue(float(joint / math.prod(singles)), order, False)


def oracle_g(model: SystemModel, spec, n: int | None = None, drive_amplitude: float = 1e-3,
             cutoff: FockCutoff | int = 5, drives: Sequence[DriveSpec] | None = None) -> OracleValue:
    """Steady-state correlator for equal-frequency drives in one call."""
    cut = cutoff if isinstance(cutoff, FockCutoff) else FockCutoff(int(cutoff))
    order = n if n is not None else (len(spec) if not isinstance(spec, (str, OutputField)) else 1)
    cut.check_order(model, order)
    L = build_liouvillian(model, drive_amplitude, cut, drives)
    rho = steady_state(L)
    return correlator_from_state(rho, L, model, spec, n, drives)

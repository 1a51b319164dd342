"""Resolvent solves and equal-time n-photon probability amplitudes.

Inputs are chained through the excitation ladder: starting from the vacuum,
each incoming photon is created by a channel's raising block and propagated by
the inverse resolvent ``K_w(j)^-1 = i (H_eff^(j) - w - i eps)^-1`` at the
running total frequency ``w``. The resulting n-excitation vector is contracted
with the output channels' lowering blocks. Photons in a channel that is both
input and output may also bypass the system, which the general amplitude
accounts for by matching leftover inputs to leftover outputs.
"""
from __future__ import annotations

import itertools
import math
import threading
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import GuardError, ModelError, SingularResolventError
from .model import DriveSpec, SystemModel
from .space import blocks_for

EPSILON_SCALE = 1e-13
GENERAL_MAX_N = 6
CHAIN_MAX_N = 10
MULTI_TERM_LIMIT = 10**6
RESIDUAL_TOL = 1e-10
SINGULAR_RCOND = 1e-15
_REFINE_STEPS = 3
_LU_CACHE_SIZE = 1024
SQRT_2PI = math.sqrt(2 * math.pi)


@dataclass(frozen=True, eq=False)
class Resolvent:
    """``K = -i (H - omega - i epsilon)`` on one excitation subspace."""

    h: np.ndarray
    omega: float
    epsilon: float
    n: int = -1
    _factor: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("resolvent regularisation must be positive")
        if self.h.ndim != 2 or self.h.shape[0] != self.h.shape[1]:
            raise ValueError("resolvent needs a square block")

    @property
    def dim(self) -> int:
        return self.h.shape[0]

    @property
    def shifted(self) -> np.ndarray:
        return self.h - (self.omega + 1j * self.epsilon) * np.eye(self.dim)

    def matrix(self) -> np.ndarray:
        return -1j * self.shifted

    def factor(self):
        """LU factors of ``H - omega - i eps`` plus a 1-norm reciprocal condition estimate."""
        if not self._factor:
            A = self.shifted
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                lu, piv = sla.lu_factor(A, check_finite=False)
            anorm = np.abs(A).sum(axis=0).max()
            rcond, info = lapack.zgecon(lu, anorm, norm="1")
            if not np.isfinite(lu).all() or info != 0:
                rcond = 0.0
            self._factor.append((lu, piv, float(rcond)))
        return self._factor[0]

    @property
    def rcond(self) -> float:
        return self.factor()[2] if self.dim else 1.0


def resolvent_solve(K: Resolvent, rhs: np.ndarray) -> np.ndarray:
    """Solve ``K x = rhs`` by pivoted LU with up to three steps of iterative refinement."""
    rhs = np.asarray(rhs, dtype=complex)
    if rhs.shape[0] != K.dim:
        raise ModelError(f"right-hand side has length {rhs.shape[0]}, subspace has dimension {K.dim}")
    if K.dim == 0:
        return rhs.copy()
    lu, piv, rcond = K.factor()
    if not rcond >= SINGULAR_RCOND:
        raise SingularResolventError(f"resolvent of subspace {K.n} at omega={K.omega!r} is singular", rcond)
    Kmat = K.matrix()
    # K x = rhs  <=>  (H - w - i eps) x = i rhs
    x = sla.lu_solve((lu, piv), 1j * rhs, check_finite=False)
    scale = np.linalg.norm(rhs)
    for _ in range(_REFINE_STEPS + 1):
        r = rhs - Kmat @ x
        if np.linalg.norm(r) <= RESIDUAL_TOL * scale:
            return x
        x = x + sla.lu_solve((lu, piv), 1j * r, check_finite=False)
    raise SingularResolventError(
        f"resolvent solve in subspace {K.n} at omega={K.omega!r} did not reach the residual tolerance", rcond
    )


@dataclass(frozen=True)
class AmplitudeRequest:
    """``inputs`` are ``(channel, frequency)`` pairs, ``outputs`` channel ids."""

    inputs: tuple[tuple[str, float], ...]
    outputs: tuple[str, ...]
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple((str(c), float(k)) for c, k in self.inputs))
        object.__setattr__(self, "outputs", tuple(str(c) for c in self.outputs))
        if len(self.inputs) != len(self.outputs):
            raise ModelError("an amplitude request needs as many outputs as inputs")

    @property
    def n(self) -> int:
        return len(self.inputs)


class _Engine:
    """Per-model resolvent cache. Factorisations are keyed by (n, omega, eps)."""

    def __init__(self, model: SystemModel):
        self.model = model
        self.blocks = blocks_for(model)
        self._lock = threading.Lock()
        self._lu: OrderedDict = OrderedDict()

    def epsilon(self, n: int, override: float | None) -> float:
        if override is not None:
            return float(override)
        if self.model.epsilon is not None:
            return float(self.model.epsilon)
        h = self.blocks.h_eff(n).data
        norm = np.abs(h).sum(axis=1).max() if h.size else 0.0
        return EPSILON_SCALE * max(1.0, float(norm))

    def resolvent(self, n: int, omega: float, eps: float | None = None) -> Resolvent:
        eps = self.epsilon(n, eps)
        key = (n, float(omega), eps)
        with self._lock:
            hit = self._lu.get(key)
            if hit is not None:
                self._lu.move_to_end(key)
                return hit
        K = Resolvent(self.blocks.h_eff(n).data, float(omega), eps, n)
        with self._lock:
            self._lu[key] = K
            if len(self._lu) > _LU_CACHE_SIZE:
                self._lu.popitem(last=False)
        return K

    def raise_vec(self, channel: str, j: int, v: np.ndarray) -> np.ndarray:
        O = self.blocks.channel_lowering(channel, j).data
        return O.conj().T @ v

    def lower_vec(self, channel: str, j: int, v: np.ndarray) -> np.ndarray:
        return self.blocks.channel_lowering(channel, j).data @ v

    def input_chain(self, seq: Sequence[tuple[str, float]], eps=None, memo=None) -> np.ndarray:
        """``<-prod_j K^-1_{w_j}(j) O^dagger_{mu_j}`` applied to the vacuum."""
        seq = tuple(seq)
        if memo is not None and seq in memo:
            return memo[seq]
        if not seq:
            v = np.ones(1, dtype=complex)
        else:
            prev = self.input_chain(seq[:-1], eps, memo)
            j = len(seq)
            omega = sum(k for _, k in seq)
            v = resolvent_solve(self.resolvent(j, omega, eps), self.raise_vec(seq[-1][0], j, prev))
        if memo is not None:
            memo[seq] = v
        return v

    def output_contract(self, outputs: Sequence[str], v: np.ndarray) -> complex:
        """``->prod_j O_{nu_j}`` applied to an excitation vector; lowering operators commute."""
        w = v
        for j in range(len(outputs), 0, -1):
            w = self.lower_vec(outputs[j - 1], j, w)
        return complex(w[0]) if w.size else 0j


def engine_for(model: SystemModel) -> _Engine:
    eng = model.__dict__.get("_engine")
    if eng is None:
        eng = _Engine(model)
        model.__dict__["_engine"] = eng
    return eng


def _check_order(model: SystemModel, n: int, limit: int) -> None:
    if n < 0:
        raise ModelError("photon number must be non-negative")
    if n > limit:
        raise GuardError(f"photon number {n} exceeds the guard of {limit} for this path")
    if n > model.max_photons:
        raise GuardError(f"photon number {n} exceeds the model's max_photons={model.max_photons}")


def _bypass_matchings(out_channels: Sequence[str], in_channels: Sequence[str]) -> int:
    if len(out_channels) != len(in_channels):
        return 0
    return sum(
        all(o == in_channels[p] for o, p in zip(out_channels, perm))
        for perm in itertools.permutations(range(len(in_channels)))
    )


def amplitude_general(model: SystemModel, req: AmplitudeRequest, epsilon: float | None = None) -> complex:
    """Equal-time n-photon amplitude for arbitrary input/output channel lists.

    Sums over the number m of photons that interact with the system, the input
    and output subsets they occupy, every ordering of the interacting inputs and
    every matching of the bypassing inputs to the remaining outputs.
    """
    n = req.n
    _check_order(model, n, GENERAL_MAX_N)
    for c, _ in req.inputs:
        model.channel(c)
    for c in req.outputs:
        model.channel(c)
    eng = engine_for(model)
    memo: dict = {}
    idx = range(n)
    total = 0j
    for m in range(n + 1):
        for D in itertools.combinations(idx, m):
            Dc = [i for i in idx if i not in D]
            in_left = [req.inputs[i][0] for i in Dc]
            chain = None
            for B in itertools.combinations(idx, m):
                Bc = [i for i in idx if i not in B]
                count = _bypass_matchings([req.outputs[i] for i in Bc], in_left)
                if count == 0:
                    continue
                if chain is None:
                    chain = sum(
                        eng.input_chain([req.inputs[i] for i in P], epsilon, memo)
                        for P in itertools.permutations(D)
                    ) if m else np.ones(1, dtype=complex)
                total += count * eng.output_contract([req.outputs[i] for i in B], chain)
    k_tot = sum(k for _, k in req.inputs)
    return np.exp(-1j * k_tot * req.time) / SQRT_2PI**n * total


def single_drive_chain(model: SystemModel, n: int, omega_d: float, in_channel: str,
                       out_channel: str, epsilon: float | None = None) -> complex:
    """``[->prod O_out][<-prod K^-1_{l w}(l) O^dagger_in]`` without prefactors."""
    eng = engine_for(model)
    v = eng.input_chain([(in_channel, omega_d)] * n, epsilon, {})
    return eng.output_contract([out_channel] * n, v)


def amplitude_single_drive(model: SystemModel, n: int, omega_d: float, in_channel: str,
                           out_channel: str, t: float = 0.0, epsilon: float | None = None) -> complex:
    _check_order(model, n, CHAIN_MAX_N)
    if in_channel == out_channel:
        raise ModelError("input and output channel coincide; use amplitude_same_channel or amplitude_general")
    model.channel(in_channel)
    model.channel(out_channel)
    xi = np.exp(-1j * omega_d * t) / SQRT_2PI
    return math.factorial(n) * xi**n * single_drive_chain(model, n, omega_d, in_channel, out_channel, epsilon)


def amplitude_same_channel(model: SystemModel, n: int, omega_d: float, channel: str,
                           t: float = 0.0, epsilon: float | None = None) -> complex:
    """Amplitude with one channel as both input and output: m photons scatter, n-m bypass."""
    _check_order(model, n, CHAIN_MAX_N)
    model.channel(channel)
    eng = engine_for(model)
    memo: dict = {}
    seq = [(channel, omega_d)] * n
    total = 0j
    for m in range(n + 1):
        v = eng.input_chain(seq[:m], epsilon, memo)
        total += math.comb(n, m) * eng.output_contract([channel] * m, v)
    I = np.exp(-1j * omega_d * t) / SQRT_2PI
    return math.factorial(n) * I**n * total


def _check_drives(model: SystemModel, n: int, drives: Sequence[DriveSpec], term_limit: int) -> None:
    if not drives:
        raise ModelError("at least one drive is required")
    for d in drives:
        model.channel(d.channel)
    if len(drives) ** n > term_limit:
        raise GuardError(f"{len(drives)}^{n} drive sequences exceed the term limit {term_limit}")


def multi_drive_vectors(model: SystemModel, n: int, drives: Sequence[DriveSpec],
                        epsilon: float | None = None) -> dict[tuple[int, ...], np.ndarray]:
    """n-excitation vectors of the multi-drive input sum, grouped by how many
    photons each drive contributed.

    Every ordered sequence of drive indices is a term; the resolvent at step l
    depends only on the multiset drawn so far, so sequences are merged by their
    count vector as the ladder is climbed. The time phase ``exp(-i w t)`` of a
    group depends only on its counts and is applied by the caller.
    """
    eng = engine_for(model)
    m = len(drives)
    freqs = np.array([d.frequency for d in drives])
    level = {(0,) * m: np.ones(1, dtype=complex)}
    for l in range(1, n + 1):
        nxt: dict[tuple[int, ...], np.ndarray] = {}
        for counts, v in level.items():
            for x, d in enumerate(drives):
                c = list(counts)
                c[x] += 1
                c = tuple(c)
                omega = float(np.dot(c, freqs))
                w = d.relative_amplitude * eng.raise_vec(d.channel, l, v)
                w = resolvent_solve(eng.resolvent(l, omega, epsilon), w)
                nxt[c] = nxt[c] + w if c in nxt else w
        level = nxt
    return level


def multi_drive_harmonics(model: SystemModel, n: int, drives: Sequence[DriveSpec], out_channel: str,
                          epsilon: float | None = None, term_limit: int = MULTI_TERM_LIMIT):
    """Frequencies ``w_c`` and weights ``a_c`` with kernel(t) = sum_c a_c exp(-i w_c t)."""
    _check_order(model, n, CHAIN_MAX_N)
    _check_drives(model, n, drives, term_limit)
    model.channel(out_channel)
    eng = engine_for(model)
    freqs = np.array([d.frequency for d in drives])
    vecs = multi_drive_vectors(model, n, drives, epsilon)
    keys = sorted(vecs)
    omegas = np.array([float(np.dot(c, freqs)) for c in keys])
    weights = np.array([eng.output_contract([out_channel] * n, vecs[c]) for c in keys])
    return omegas, weights


def amplitude_multi_drive_kernel(model: SystemModel, n: int, drives: Sequence[DriveSpec], out_channel: str,
                                 t: float = 0.0, epsilon: float | None = None,
                                 term_limit: int = MULTI_TERM_LIMIT) -> complex:
    """``[->prod O_out] sum_x <-prod K^-1_{sum w_x}(l) eta_{x_l} O^dagger_{b_{x_l}} exp(-i w_{x_l} t)``."""
    omegas, weights = multi_drive_harmonics(model, n, drives, out_channel, epsilon, term_limit)
    return complex(np.sum(weights * np.exp(-1j * omegas * t)))

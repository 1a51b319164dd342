"""Observables assembled from photon amplitudes.

``g^(n)`` compares the n-photon detection amplitude with the n-th power of the
one-photon amplitude, so every correlator here is a ratio of a few resolvent
chains. When the one-photon amplitude vanishes (a dark transmission point) the
ratio is 0/0 and the result is flagged ``undefined`` instead of returning a
non-finite number.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .amplitude import (
    SQRT_2PI,
    AmplitudeRequest,
    amplitude_general,
    amplitude_same_channel,
    amplitude_single_drive,
    engine_for,
    multi_drive_harmonics,
)
from .errors import ModelError
from .model import DriveSpec, SystemModel
from .space import blocks_for

UNDEFINED_THRESHOLD = 1e-30


@dataclass(frozen=True)
class CorrelatorResult:
    value: float | None
    n: int
    undefined: bool = False
    diagnostics: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.undefined != (self.value is None):
            raise ValueError("value must be None exactly when the result is undefined")

    def __float__(self) -> float:
        return math.nan if self.value is None else self.value


def _diagnostics(model: SystemModel, p1: complex, ladder: Sequence[tuple[int, float]], epsilon) -> dict:
    eng = engine_for(model)
    blocks = blocks_for(model)
    rconds = [eng.resolvent(l, w, epsilon).rcond for l, w in ladder]
    return {
        "p1_abs": abs(p1),
        "block_dims": tuple(blocks.basis(l).dim for l, _ in ladder),
        "min_rcond": min(rconds) if rconds else 1.0,
    }


def _ratio(numerator_sq: float, denominators_sq: Sequence[float], n: int, diag: dict) -> CorrelatorResult:
    if min(denominators_sq) < UNDEFINED_THRESHOLD:
        return CorrelatorResult(None, n, True, diag)
    return CorrelatorResult(float(numerator_sq / math.prod(denominators_sq)), n, False, diag)


def _need_order(n: int, low: int = 2) -> None:
    if n < low:
        raise ModelError(f"correlation order must be at least {low}, got {n}")


# -- single drive ------------------------------------------------------------

def etcf(model: SystemModel, n: int, omega_d: float, in_channel: str, out_channel: str,
         epsilon: float | None = None) -> CorrelatorResult:
    """``|P_n / n!|^2 / |P_1|^(2n)`` for a drive and a monitor on distinct channels."""
    _need_order(n)
    p1 = amplitude_single_drive(model, 1, omega_d, in_channel, out_channel, epsilon=epsilon)
    pn = amplitude_single_drive(model, n, omega_d, in_channel, out_channel, epsilon=epsilon)
    diag = _diagnostics(model, p1, [(l, l * omega_d) for l in range(1, n + 1)], epsilon)
    return _ratio(abs(pn / math.factorial(n)) ** 2, [abs(p1) ** 2] * n, n, diag)


def transmission(model: SystemModel, omega_d: float, in_channel: str, out_channel: str,
                 epsilon: float | None = None) -> CorrelatorResult:
    """Single-photon transmission ``2 pi |P_1|^2 = |O_out K^-1 O_in^dagger|^2``."""
    p1 = amplitude_single_drive(model, 1, omega_d, in_channel, out_channel, epsilon=epsilon)
    diag = _diagnostics(model, p1, [(1, omega_d)], epsilon)
    return CorrelatorResult(float(2 * math.pi * abs(p1) ** 2), 1, False, diag)


# -- several drives ----------------------------------------------------------

@dataclass(frozen=True)
class MultiDriveSeries:
    """Harmonic decomposition of the order-1 and order-n kernels, for fast ``g(t)``."""

    n: int
    omegas_1: np.ndarray
    weights_1: np.ndarray
    omegas_n: np.ndarray
    weights_n: np.ndarray

    def kernels(self, times) -> tuple[np.ndarray, np.ndarray]:
        t = np.atleast_1d(np.asarray(times, dtype=float))
        k1 = np.exp(-1j * np.outer(t, self.omegas_1)) @ self.weights_1
        kn = np.exp(-1j * np.outer(t, self.omegas_n)) @ self.weights_n
        return k1, kn

    def values(self, times) -> np.ndarray:
        """``g(t)`` on a grid; undefined points are NaN."""
        k1, kn = self.kernels(times)
        d = np.abs(k1) ** 2 / (2 * math.pi)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.abs(kn) ** 2 / np.abs(k1) ** (2 * self.n)
        return np.where(d < UNDEFINED_THRESHOLD, np.nan, g)

    @property
    def period(self) -> float | None:
        """Smallest common period of ``|k_1|^2`` and ``|k_n|^2``; None when static or incommensurate."""
        diffs = []
        for om in (self.omegas_1, self.omegas_n):
            d = np.abs(om[:, None] - om[None, :]).ravel()
            diffs.append(d[d > 1e-12 * max(1.0, np.abs(om).max())])
        diffs = np.concatenate(diffs)
        if diffs.size == 0:
            return None
        base = diffs.min()
        ratios = diffs / base
        if not np.allclose(ratios, np.round(ratios), rtol=0, atol=1e-9):
            return None
        return 2 * math.pi / base


def multi_drive_series(model: SystemModel, n: int, drives: Sequence[DriveSpec], out_channel: str,
                       epsilon: float | None = None, term_limit: int | None = None) -> MultiDriveSeries:
    kw = {} if term_limit is None else {"term_limit": term_limit}
    o1, w1 = multi_drive_harmonics(model, 1, drives, out_channel, epsilon, **kw)
    on, wn = multi_drive_harmonics(model, n, drives, out_channel, epsilon, **kw)
    return MultiDriveSeries(n, o1, w1, on, wn)


def etcf_multi(model: SystemModel, n: int, drives: Sequence[DriveSpec], out_channel: str,
               t: float = 0.0, epsilon: float | None = None, term_limit: int | None = None) -> CorrelatorResult:
    """``g^(n)(t)`` from the ratio of multi-drive kernels; static when all frequencies agree."""
    _need_order(n)
    for d in drives:
        if d.channel == out_channel:
            raise ModelError("a drive channel coincides with the output channel")
    series = multi_drive_series(model, n, drives, out_channel, epsilon, term_limit)
    k1, kn = (k[0] for k in series.kernels([t]))
    p1 = k1 / SQRT_2PI
    ladder = sorted({(l, float(w)) for l in range(1, n + 1) for w in _level_frequencies(drives, l)})
    diag = _diagnostics(model, p1, ladder, epsilon)
    diag["period"] = series.period
    if abs(p1) ** 2 < UNDEFINED_THRESHOLD:
        return CorrelatorResult(None, n, True, diag)
    return CorrelatorResult(float(abs(kn) ** 2 / abs(k1) ** (2 * n)), n, False, diag)


def _level_frequencies(drives: Sequence[DriveSpec], l: int) -> set[float]:
    freqs = sorted({d.frequency for d in drives})
    out = {0.0}
    for _ in range(l):
        out = {a + b for a in out for b in freqs}
    return out


def transmission_multi(model: SystemModel, drives: Sequence[DriveSpec], out_channel: str,
                       epsilon: float | None = None) -> CorrelatorResult:
    """``|O_out K^-1 sum_i eta_i O_{b_i}^dagger|^2 / |sum_i eta_i|^2`` for equal-frequency drives."""
    if not drives:
        raise ModelError("at least one drive is required")
    freqs = {d.frequency for d in drives}
    if len(freqs) != 1:
        raise ModelError("transmission with several drives needs equal drive frequencies")
    omega = freqs.pop()
    o1, w1 = multi_drive_harmonics(model, 1, drives, out_channel, epsilon)
    k1 = complex(w1.sum())
    norm = abs(sum(d.relative_amplitude for d in drives)) ** 2
    diag = _diagnostics(model, k1 / SQRT_2PI, [(1, omega)], epsilon)
    if norm < UNDEFINED_THRESHOLD:
        return CorrelatorResult(None, 1, True, diag)
    return CorrelatorResult(float(abs(k1) ** 2 / norm), 1, False, diag)


# -- general channel lists -----------------------------------------------------

def cross_correlation(model: SystemModel, outputs: Sequence[str], omega_d: float, in_channel: str,
                      epsilon: float | None = None) -> CorrelatorResult:
    """``|P_n^{mu nu} / n!|^2 / prod_j |P_1^{mu nu_j}|^2`` for one drive and n monitored channels."""
    n = len(outputs)
    _need_order(n)
    req = AmplitudeRequest(tuple((in_channel, omega_d) for _ in outputs), tuple(outputs))
    pn = amplitude_general(model, req, epsilon)
    p1s = [amplitude_general(model, AmplitudeRequest(((in_channel, omega_d),), (o,)), epsilon) for o in outputs]
    diag = _diagnostics(model, min(p1s, key=abs), [(l, l * omega_d) for l in range(1, n + 1)], epsilon)
    return _ratio(abs(pn / math.factorial(n)) ** 2, [abs(p) ** 2 for p in p1s], n, diag)


def etcf_same_channel(model: SystemModel, n: int, omega_d: float, channel: str,
                      epsilon: float | None = None) -> CorrelatorResult:
    """``|P_n / n!|^2 / |P_1|^(2n)`` when the drive channel is also the monitored one.

    Far from any resonance the photons bypass the system and the value tends to 1.
    """
    _need_order(n)
    p1 = amplitude_same_channel(model, 1, omega_d, channel, epsilon=epsilon)
    pn = amplitude_same_channel(model, n, omega_d, channel, epsilon=epsilon)
    diag = _diagnostics(model, p1, [(l, l * omega_d) for l in range(1, n + 1)], epsilon)
    return _ratio(abs(pn / math.factorial(n)) ** 2, [abs(p1) ** 2] * n, n, diag)


def transmission_same(model: SystemModel, omega_d: float, channel: str,
                      epsilon: float | None = None) -> CorrelatorResult:
    p1 = amplitude_same_channel(model, 1, omega_d, channel, epsilon=epsilon)
    diag = _diagnostics(model, p1, [(1, omega_d)], epsilon)
    return CorrelatorResult(float(2 * math.pi * abs(p1) ** 2), 1, False, diag)


# -- CSV rows ------------------------------------------------------------------

def fmt_float(x: float | None) -> str:
    """Round-trip text for a float; empty for an undefined value."""
    return "" if x is None else repr(float(x))


def csv_header(param_names: Sequence[str], orders: Sequence[int]) -> list[str]:
    return [*param_names, "T", *[f"g{n}" for n in orders], "flags"]


def csv_row(params: Sequence[float], trans: CorrelatorResult | None,
            correlations: Sequence[CorrelatorResult]) -> list[str]:
    flags = [f"g{r.n}_undefined" for r in correlations if r.undefined]
    if trans is not None and trans.undefined:
        flags.insert(0, "T_undefined")
    return [
        *[fmt_float(p) for p in params],
        fmt_float(None if trans is None else trans.value),
        *[fmt_float(r.value) for r in correlations],
        ";".join(flags),
    ]

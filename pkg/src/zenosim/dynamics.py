"""Discrete-spectrum dynamics under repeated measurements.

Jump probabilities during a single measurement (general double-time
integral, the time-independent single-integral form, and the
strong-measurement approximation), the inhibition time over which repeated
measurements freeze the populations, the diagonal rate equation of the
strong-measurement regime, and the analytic two-level references (free Rabi
oscillation and the measured exponential approach to equal occupation).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    NoTransitions,
    NotInZenoRegime,
    QuadratureNotConverged,
    ZeroFrequency,
)
from .model import DetectorModel, SystemSpec, TwoLevelPreset, correlation, strength


def _trap_weights(nt: int, h: float) -> np.ndarray:
    w = np.full(nt, h)
    w[0] = w[-1] = h / 2.0
    return w


def _romberg(eval_at, nt0: int, rel_tol: float, max_halvings: int,
             what: str) -> float:
    """Trapezoid ladder with Richardson extrapolation.

    eval_at(nt) must return the raw trapezoid value on an nt-point uniform
    grid; the grid is refined by halving h until two successive
    extrapolated values agree to rel_tol.
    """
    nt = nt0
    rows = [[eval_at(nt)]]
    prev = rows[0][0]
    for k in range(1, max_halvings + 1):
        nt = 2 * (nt - 1) + 1
        row = [eval_at(nt)]
        for j in range(1, k + 1):
            row.append(row[j - 1] + (row[j - 1] - rows[k - 1][j - 1]) / (4 ** j - 1))
        rows.append(row)
        best = row[-1]
        if abs(best - prev) <= rel_tol * max(abs(best), 1e-14):
            return best
        prev = best
    raise QuadratureNotConverged(f"{what} still moving at {nt} grid points")


def _v_samples(sys: SystemSpec, t0: float, t: np.ndarray) -> np.ndarray:
    if sys.constant_v or sys.v is None:
        return np.broadcast_to(sys.v_at(0.0), (t.size, sys.dim, sys.dim))
    return np.stack([sys.v_at(t0 + ti) for ti in t])


def jump_probability_general(sys: SystemSpec, det: DetectorModel,
                             i: int, alpha: int, f: int, alpha1: int,
                             t0: float = 0.0, rel_tol: float = 1e-6) -> float:
    """Probability of the jump (i, alpha) -> (f, alpha1) during one measurement.

    Double time integral of the product of the perturbation matrix elements
    with the detector correlation kernel F(lambda * w_if * (t2 - t1)),
    evaluated by nested trapezoid with Richardson-extrapolated refinement
    (relative change below rel_tol on halving the step).
    """
    if (i, alpha) == (f, alpha1):
        raise ValueError("source and target states must differ")
    ii = sys.flat_index(i, alpha)
    ff = sys.flat_index(f, alpha1)
    w_if = sys.omega_level()[ii, ff]
    w_phase = sys.omega_full()[ii, ff]
    hbar = sys.hbar

    def evaluate(nt: int) -> float:
        t = np.linspace(0.0, det.tau, nt)
        w = _trap_weights(nt, t[1] - t[0])
        vs = _v_samples(sys, t0, t)
        v1 = vs[:, ff, ii]        # V(t1)[f, i]
        v2 = vs[:, ii, ff]        # V(t2)[i, f]
        u = t[None, :] - t[:, None]            # t2 - t1, rows t1
        kern = correlation(det, det.lam * w_if * u) * np.exp(1j * w_phase * u)
        val = (w * v1) @ kern @ (w * v2) / hbar ** 2
        return float(val.real)

    return _romberg(evaluate, 65, rel_tol, 5, "jump probability")


def jump_probability_timeindep(sys: SystemSpec, det: DetectorModel,
                               i: int, alpha: int, f: int, alpha1: int,
                               rel_tol: float = 1e-9) -> float:
    """Jump probability for a time-independent V, reduced to one integral.

    W = (2/hbar^2) Re  int_0^tau  F(lambda w_fi t) e^{i w_fi t} (tau - t)
        |V_fi|^2 e^{i (E1_f - E1_i) t / hbar}  dt
    """
    if not sys.constant_v:
        raise ValueError("time-independent form requires a constant V")
    ii = sys.flat_index(i, alpha)
    ff = sys.flat_index(f, alpha1)
    w_fi = sys.omega_level()[ff, ii]
    v2 = abs(sys.v_at(0.0)[ff, ii]) ** 2
    if v2 == 0.0:
        return 0.0
    om_e = (sys.e1[ff] - sys.e1[ii]) / sys.hbar
    tau = det.tau

    def evaluate(nt: int) -> float:
        t = np.linspace(0.0, tau, nt)
        w = _trap_weights(nt, t[1] - t[0])
        integrand = (correlation(det, det.lam * w_fi * t)
                     * np.exp(1j * (w_fi + om_e) * t) * (tau - t))
        return float((2.0 * v2 / sys.hbar ** 2) * (w @ integrand).real)

    return _romberg(evaluate, 129, rel_tol, 9, "jump probability")


def jump_probability_strong(sys: SystemSpec, det: DetectorModel,
                            i: int, alpha: int, f: int, alpha1: int,
                            t0: float = 0.0) -> float:
    """Strong-measurement jump probability, proportional to 1/Lambda.

    Replaces the correlation kernel by its delta-function weight, giving
    W ~ (2 / (hbar^2 Lambda |w_if|)) int_0^tau |V(t + t0)_fi|^2 dt.
    Requires Lambda tau |w_if| >> 1; warns below 10.
    """
    ii = sys.flat_index(i, alpha)
    ff = sys.flat_index(f, alpha1)
    w_if = sys.omega_level()[ii, ff]
    if w_if == 0.0:
        raise ZeroFrequency("strong-measurement formula is singular at w_if = 0")
    s = strength(det)
    if s.Lambda * det.tau * abs(w_if) < 10.0:
        warnings.warn("Lambda*tau*|w_if| < 10: outside the strong-measurement window",
                      NotInZenoRegime)
    if sys.constant_v or sys.v is None:
        integral = det.tau * abs(sys.v_at(0.0)[ff, ii]) ** 2
    else:
        t = np.linspace(0.0, det.tau, 513)
        vals = np.array([abs(sys.v_at(t0 + ti)[ff, ii]) ** 2 for ti in t])
        integral = float(np.trapezoid(vals, t))
    return 2.0 * integral / (sys.hbar ** 2 * s.Lambda * abs(w_if))


@dataclass(frozen=True)
class JumpTable:
    """Jump probabilities between all coupled flattened states."""

    w: np.ndarray
    tau: float
    t0: float


def jump_table(sys: SystemSpec, det: DetectorModel, t0: float = 0.0,
               rel_tol: float = 1e-6) -> JumpTable:
    """General jump probabilities W[source, target] for every coupled pair."""
    d = sys.dim
    lv = sys.state_level
    pairs = [(n, a) for n, al in enumerate(sys.alpha_energies) for a in range(len(al))]
    w = np.zeros((d, d))
    for js, (ns, as_) in enumerate(pairs):
        for jt, (ntgt, at) in enumerate(pairs):
            if js == jt or lv[js] == lv[jt]:
                continue
            w[js, jt] = jump_probability_general(sys, det, ns, as_, ntgt, at,
                                                 t0=t0, rel_tol=rel_tol)
    return JumpTable(w=w, tau=det.tau, t0=t0)


def _coupled_pairs(sys: SystemSpec):
    v = sys.v_at(0.0)
    lv = sys.state_level
    w_lvl = sys.omega_level()
    out = []
    for j in range(sys.dim):
        for k in range(sys.dim):
            if j != k and abs(v[j, k]) > 0.0 and lv[j] != lv[k]:
                out.append((j, k, abs(w_lvl[j, k]), abs(v[j, k])))
    return out


def inhibition_time(sys: SystemSpec, det: DetectorModel) -> float:
    """Characteristic time over which measurements freeze the populations.

    t_inh = Lambda hbar^2 |w_min| / (2 |V_max|^2), with w_min the smallest
    transition frequency among pairs the perturbation actually couples and
    V_max the largest coupled matrix element.
    """
    pairs = _coupled_pairs(sys)
    if not pairs:
        raise NoTransitions("V couples no pair of levels")
    w_min = min(p[2] for p in pairs)
    if w_min == 0.0:
        raise ZeroFrequency("coupled pair with zero transition frequency")
    v_max = max(p[3] for p in pairs)
    lam = strength(det).Lambda
    return lam * sys.hbar ** 2 * w_min / (2.0 * v_max ** 2)


@dataclass(frozen=True)
class RateMatrix:
    """Generator of the diagonal rate equation d rho / dt = A rho / (Lambda tau)."""

    a: np.ndarray
    Lambda: float
    tau: float

    def evolve(self, p0: np.ndarray, t) -> np.ndarray:
        """Populations at time(s) t from initial populations p0."""
        w, u = np.linalg.eigh(self.a)
        t = np.asarray(t, dtype=float)
        coef = u.T @ np.asarray(p0, dtype=float)
        return np.einsum("jk,...k,k->...j", u, np.exp(np.multiply.outer(t / (self.Lambda * self.tau), w)), coef)


def rate_matrix(sys: SystemSpec, det: DetectorModel, t0: float = 0.0) -> RateMatrix:
    """Strong-measurement rate tensor restricted to the populations.

    Gain into state j from state k is 2 * int |V_jk|^2 dt / (hbar^2 |w_jk|);
    the diagonal collects the two loss sums over intermediate states, so
    columns sum to zero (probability conservation).
    """
    d = sys.dim
    lv = sys.state_level
    w_lvl = sys.omega_level()
    if sys.constant_v or sys.v is None:
        iv = det.tau * np.abs(sys.v_at(0.0)) ** 2
    else:
        t = np.linspace(0.0, det.tau, 513)
        wq = _trap_weights(t.size, t[1] - t[0])
        vs = _v_samples(sys, t0, t)
        iv = np.einsum("t,tjk->jk", wq, np.abs(vs) ** 2).real
    coupled = iv > 0.0
    np.fill_diagonal(coupled, False)
    same_level = lv[:, None] == lv[None, :]
    if np.any(coupled & (w_lvl == 0.0) & ~same_level):
        raise ZeroFrequency("degenerate coupled pair: use the general jump integral")
    if np.any(coupled & same_level):
        raise ZeroFrequency("V couples states within one level (w = 0)")

    a = np.zeros((d, d))
    hb2 = sys.hbar ** 2
    for j in range(d):
        for k in range(d):
            if coupled[j, k]:
                a[j, k] = 2.0 * iv[j, k] / (hb2 * abs(w_lvl[j, k]))
    for j in range(d):
        loss = 0.0
        for s in range(d):
            if coupled[s, j]:
                loss += 2.0 * iv[s, j] / (hb2 * abs(w_lvl[s, j]))
        a[j, j] = -loss
    return RateMatrix(a=a, Lambda=strength(det).Lambda, tau=det.tau)


def rabi_unmeasured(preset: TwoLevelPreset, t):
    """Populations (rho11, rho00) of the free two-level system started in |1>."""
    omega, big = preset.omega, preset.rabi_frequency
    t = np.asarray(t, dtype=float)
    if big == 0.0:
        one = np.ones_like(t)
        return one, np.zeros_like(t)
    ratio2 = (omega / big) ** 2
    s2 = np.sin(0.5 * big * t) ** 2
    rho11 = np.cos(0.5 * big * t) ** 2 + ratio2 * s2
    rho00 = (1.0 - ratio2) * s2
    return rho11, rho00


def two_level_inhibition_time(preset: TwoLevelPreset, det: DetectorModel) -> float:
    """t_inh = (Lambda / 2 omega) |hbar omega / v|^2 for the two-level system."""
    lam = strength(det).Lambda
    v = abs(preset.v)
    if v == 0.0:
        return float("inf")
    return (lam / (2.0 * preset.omega)) * (preset.hbar * preset.omega / v) ** 2


def measured_exponential(preset: TwoLevelPreset, det: DetectorModel, t):
    """Exponential approach of the measured populations to equal occupation.

    rho11(t) = (1 + exp(-2 t / t_inh)) / 2 from the diagonal rate equation;
    valid in the strong-measurement regime.
    """
    t = np.asarray(t, dtype=float)
    t_inh = two_level_inhibition_time(preset, det)
    if t_inh == float("inf"):
        decay = np.ones_like(t)
    elif t_inh == 0.0:
        decay = np.where(t == 0.0, 1.0, 0.0)
    else:
        decay = np.exp(-2.0 * t / t_inh)
    rho11 = 0.5 * (1.0 + decay)
    rho00 = 0.5 * (1.0 - decay)
    return rho11, rho00

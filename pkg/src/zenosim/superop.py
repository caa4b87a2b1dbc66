"""Measurement superoperators and their composition.

One finite-duration measurement maps the system density matrix linearly,
rho'_pr = sum_nm S[p,r,n,m] rho_nm.  The tensor S is built three ways:

* exact quadrature over the detector coordinate q (each node propagates the
  system with the level Hamiltonian rescaled by 1 + lambda*q and the results
  are averaged over the detector position distribution),
* the closed form for an unperturbed system (V = 0), where each coherence
  picks up its free phase and a damping factor F(lambda*tau*omega),
* second-order perturbation theory in V, with the two time integrals of the
  Dyson expansion evaluated on a trapezoid grid.

`repeat` composes measurements back to back, which is the densest
measurement sequence the finite duration allows.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import roots_hermite

from .errors import (
    DimensionMismatch,
    PropagationStepTooCoarse,
    QuadratureNotConverged,
    StepCountTooSmall,
    TraceDrift,
)
from .model import DetectorModel, SystemSpec, correlation
from .qmat import apply_super, check_density_matrix, trace_sum_rule_defect, unitary_exp_stack

EXACT_QUADRATURE = "exact_quadrature"
UNPERTURBED = "unperturbed"
SECOND_ORDER = "second_order"

_METHOD_TAGS = {EXACT_QUADRATURE: 0, UNPERTURBED: 1, SECOND_ORDER: 2}
_TAG_METHODS = {v: k for k, v in _METHOD_TAGS.items()}


@dataclass(frozen=True)
class QuadratureRule:
    """Discretization of the detector position distribution |<q|Phi>|^2."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise DimensionMismatch("nodes and weights must be matching 1-d arrays")
        if nodes.size < 8:
            raise ValueError("quadrature rule needs at least 8 nodes")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"quadrature weights must sum to 1, got {weights.sum()!r}")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.nodes.size


@lru_cache(maxsize=64)
def _hermite_nodes(n: int):
    x, w = roots_hermite(n)
    return x, w


def gauss_hermite_rule(n: int, q_std: float) -> QuadratureRule:
    """Gauss-Hermite rule for a centered Gaussian q-distribution of std q_std.

    Outer nodes whose weights underflow to zero (w ~ exp(-x^2) for large
    rules) are dropped; they carry no probability mass."""
    x, w = _hermite_nodes(int(n))
    keep = w > 0.0
    x, w = x[keep], w[keep]
    nodes = np.sqrt(2.0) * q_std * x
    weights = w / w.sum()
    return QuadratureRule(nodes=nodes, weights=weights)


def default_rule(det: DetectorModel, n: int) -> QuadratureRule:
    """Quadrature rule implied by the detector kind (Gaussian only)."""
    if det.kind != "gaussian":
        raise ValueError(
            "no default position distribution for a custom detector; supply a rule")
    return gauss_hermite_rule(n, 1.0 / det.sigma)


@dataclass(frozen=True)
class MeasurementChannel:
    """One measurement as a linear map on density matrices."""

    tensor: np.ndarray
    method: str
    t0: float
    tau: float
    certified_trace_err: float
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def dim(self) -> int:
        return self.tensor.shape[0]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return apply_super(self.tensor, rho)


def _propagators(sys: SystemSpec, det: DetectorModel, t0: float,
                 rule: QuadratureRule, substeps: int) -> np.ndarray:
    """Evolution operators U(tau, xi_k) for every quadrature node, stacked (K, d, d).

    For constant V a single Hermitian exponential per node is exact; a
    time-dependent V is frozen at substep midpoints and the substep
    exponentials composed in order.
    """
    xi = 1.0 + det.lam * rule.nodes
    h0 = np.diag(sys.e0).astype(complex)
    h1 = np.diag(sys.e1).astype(complex)
    d = sys.dim
    if sys.constant_v or sys.v is None:
        v = sys.v_at(0.0)
        hs = xi[:, None, None] * h0 + (h1 + v)
        return unitary_exp_stack(hs, det.tau / sys.hbar)
    dt = det.tau / substeps
    u = np.broadcast_to(np.eye(d, dtype=complex), (xi.size, d, d)).copy()
    for j in range(substeps):
        t_mid = t0 + (j + 0.5) * dt
        v = sys.v_at(t_mid)
        hs = xi[:, None, None] * h0 + (h1 + v)
        step = unitary_exp_stack(hs, dt / sys.hbar)
        u = np.einsum("kab,kbc->kac", step, u)
    return u


def _tensor_from_rule(sys: SystemSpec, det: DetectorModel, t0: float,
                      rule: QuadratureRule, substeps: int) -> np.ndarray:
    u = _propagators(sys, det, t0, rule, substeps)
    return np.einsum("k,kpn,krm->prnm", rule.weights, u, u.conj())


def build_exact(sys: SystemSpec, det: DetectorModel, t0: float = 0.0,
                rule: QuadratureRule | None = None, *,
                entry_tol: float = 1e-8,
                min_nodes: int = 64, max_nodes: int = 8192,
                min_substeps: int = 8, max_substeps: int = 1024) -> MeasurementChannel:
    """Exact-quadrature measurement channel.

    With an explicit rule the tensor is built on that rule (still refining
    the time substeps for a time-dependent V).  With rule=None the detector
    must be Gaussian and the Gauss-Hermite node count is doubled until no
    tensor entry moves by more than entry_tol.

    Raises PropagationStepTooCoarse if substep doubling does not stabilize
    and QuadratureNotConverged if the node ladder hits max_nodes.
    """
    if sys.dim > 64:
        raise DimensionMismatch(f"system dimension {sys.dim} exceeds the supported 64")

    def build_at(r: QuadratureRule):
        if sys.constant_v or sys.v is None:
            return _tensor_from_rule(sys, det, t0, r, 1), 1
        m = min_substeps
        t = _tensor_from_rule(sys, det, t0, r, m)
        while True:
            t2 = _tensor_from_rule(sys, det, t0, r, 2 * m)
            if np.abs(t2 - t).max() <= entry_tol:
                return t2, 2 * m
            m *= 2
            t = t2
            if 2 * m > max_substeps:
                raise PropagationStepTooCoarse(
                    f"tensor entries still moving by > {entry_tol:.1e} at {m} substeps")

    if rule is not None:
        tensor, m = build_at(rule)
        quad_err = None
        nodes = len(rule)
    else:
        n = min_nodes
        tensor, m = build_at(default_rule(det, n))
        while True:
            tensor2, m = build_at(default_rule(det, 2 * n))
            quad_err = float(np.abs(tensor2 - tensor).max())
            tensor = tensor2
            n *= 2
            if quad_err <= entry_tol:
                nodes = n
                break
            if 2 * n > max_nodes:
                raise QuadratureNotConverged(
                    f"entries still moving by {quad_err:.2e} at {n} Gauss-Hermite nodes")
    err = trace_sum_rule_defect(tensor)
    return MeasurementChannel(tensor=tensor, method=EXACT_QUADRATURE, t0=t0, tau=det.tau,
                              certified_trace_err=err,
                              meta={"nodes": nodes, "substeps": m, "quad_entry_err": quad_err})


def build_unperturbed(sys: SystemSpec, det: DetectorModel) -> MeasurementChannel:
    """Closed-form channel of the unperturbed measurement (V ignored).

    Populations are untouched (F(0) = 1); the coherence between flattened
    states p and r is multiplied by exp(i omega_rp tau) F(lambda tau w_rp),
    with the F argument using level frequencies only, since the detector
    couples to the level Hamiltonian.
    """
    tau = det.tau
    w_full = sys.omega_full()
    w_lvl = sys.omega_level()
    factor = np.exp(1j * tau * w_full.T) * correlation(det, det.lam * tau * w_lvl.T)
    d = sys.dim
    eye = np.eye(d)
    tensor = np.einsum("pr,pn,rm->prnm", factor, eye, eye)
    err = trace_sum_rule_defect(tensor)
    return MeasurementChannel(tensor=tensor, method=UNPERTURBED, t0=0.0, tau=tau,
                              certified_trace_err=err)


def _triangular_weights(t: np.ndarray) -> np.ndarray:
    """Weights T[i, j] so that sum_ij T f(t_i, t_j) approximates the nested
    integral over 0 <= t2 <= t1 <= tau by iterated trapezoid on a shared grid."""
    nt = t.size
    h = t[1] - t[0]
    outer = np.full(nt, h)
    outer[0] = outer[-1] = h / 2.0
    tri = np.zeros((nt, nt))
    for i in range(1, nt):
        tri[i, : i + 1] = h
        tri[i, 0] = h / 2.0
        tri[i, i] = h / 2.0
    return outer[:, None] * tri


def build_second_order(sys: SystemSpec, det: DetectorModel, t0: float = 0.0,
                       steps: int = 256) -> MeasurementChannel:
    """Channel from second-order perturbation theory in V.

    S = S0 + S1 + S2 with S0 the unperturbed closed form, S1 linear and S2
    quadratic in V; valid when the action of V over one measurement is small
    (||V|| tau / hbar << 1, not enforced here).  Single time integrals use
    the trapezoid rule and the nested t2 <= t1 integrals an iterated
    trapezoid on the same `steps`-point grid.
    """
    if steps < 16:
        raise StepCountTooSmall(f"steps = {steps} < 16")
    tau, lam, hbar = det.tau, det.lam, sys.hbar
    d = sys.dim
    t = np.linspace(0.0, tau, steps + 1)
    nt = t.size
    h = t[1] - t[0]
    w1 = np.full(nt, h)
    w1[0] = w1[-1] = h / 2.0
    tri = _triangular_weights(t)

    w_full = sys.omega_full()
    w_lvl = sys.omega_level()
    if sys.constant_v or sys.v is None:
        vs = np.broadcast_to(sys.v_at(0.0), (nt, d, d))
    else:
        vs = np.stack([sys.v_at(t0 + ti) for ti in t])

    def f_of(args):
        return correlation(det, args)

    phase_out = np.exp(1j * w_full.T * tau)  # phase_out[p, r] = exp(i w_full[r,p] tau)

    s1 = np.zeros((d, d, d, d), dtype=complex)
    for p in range(d):
        for n in range(d):
            # first term: r = m, integrand V(t)[p,n] e^{i w_full[p,n] t}
            x = vs[:, p, n] * np.exp(1j * w_full[p, n] * t)
            if np.any(x):
                args = lam * (w_lvl[:, p][:, None] * tau + w_lvl[p, n] * t[None, :])
                a1 = f_of(args) @ (w1 * x)  # indexed by r
                for r in range(d):
                    s1[p, r, n, r] += phase_out[p, r] * a1[r] / (1j * hbar)
    for m in range(d):
        for r in range(d):
            # second term: p = n, integrand V(t)[m,r] e^{i w_full[m,r] t}
            x = vs[:, m, r] * np.exp(1j * w_full[m, r] * t)
            if np.any(x):
                args = lam * (w_lvl[r][:, None] * tau + w_lvl[m, r] * t[None, :])
                a2 = f_of(args) @ (w1 * x)  # indexed by p
                for p in range(d):
                    s1[p, r, p, m] -= phase_out[p, r] * a2[p] / (1j * hbar)

    s2 = np.zeros((d, d, d, d), dtype=complex)
    hb2 = hbar ** 2
    for p in range(d):
        for n in range(d):
            x1 = vs[:, p, n] * np.exp(1j * w_full[p, n] * t)
            if not np.any(x1):
                continue
            for m in range(d):
                for r in range(d):
                    x2 = vs[:, m, r] * np.exp(1j * w_full[m, r] * t)
                    if not np.any(x2):
                        continue
                    args = lam * (w_lvl[r, p] * tau
                                  + np.add.outer(w_lvl[p, n] * t, w_lvl[m, r] * t))
                    val = (w1 * x1) @ f_of(args) @ (w1 * x2)
                    s2[p, r, n, m] += phase_out[p, r] * val / hb2
    for p in range(d):
        for n in range(d):
            for s in range(d):
                x1 = vs[:, p, s] * np.exp(1j * w_full[p, s] * t)
                x2 = vs[:, s, n] * np.exp(1j * w_full[s, n] * t)
                if not (np.any(x1) and np.any(x2)):
                    continue
                for r in range(d):
                    args = lam * (w_lvl[r, p] * tau
                                  + np.add.outer(w_lvl[p, s] * t, w_lvl[s, n] * t))
                    val = x1 @ (tri * f_of(args)) @ x2
                    s2[p, r, n, r] -= phase_out[p, r] * val / hb2
    for m in range(d):
        for r in range(d):
            for s in range(d):
                x1 = vs[:, s, r] * np.exp(1j * w_full[s, r] * t)  # t1 integrand
                x2 = vs[:, m, s] * np.exp(1j * w_full[m, s] * t)  # t2 integrand
                if not (np.any(x1) and np.any(x2)):
                    continue
                for p in range(d):
                    args = lam * (w_lvl[r, p] * tau
                                  + np.add.outer(w_lvl[s, r] * t, w_lvl[m, s] * t))
                    val = x1 @ (tri * f_of(args)) @ x2
                    s2[p, r, p, m] -= phase_out[p, r] * val / hb2

    tensor = build_unperturbed(sys, det).tensor + s1 + s2
    err = trace_sum_rule_defect(tensor)
    return MeasurementChannel(tensor=tensor, method=SECOND_ORDER, t0=t0, tau=det.tau,
                              certified_trace_err=err, meta={"steps": steps})


def repeat(channel_factory, rho0: np.ndarray, n: int,
           trace_tol: float = 1e-6) -> np.ndarray:
    """Apply N back-to-back measurements; returns the stack of states after
    each measurement, shape (N, d, d).

    channel_factory(t0) must return the channel for the measurement starting
    at t0; a time-independent system may return the same channel every call.
    Raises TraceDrift if any step's trace leaves 1 by more than trace_tol.
    """
    if n < 1:
        raise ValueError("need at least one measurement")
    rho = check_density_matrix(rho0)
    out = np.empty((n,) + rho.shape, dtype=complex)
    t0 = 0.0
    for k in range(n):
        ch = channel_factory(t0)
        rho = ch.apply(rho)
        drift = abs(rho.trace() - 1.0)
        if drift > trace_tol:
            raise TraceDrift(f"trace drifted by {drift:.3e} at measurement {k + 1}")
        out[k] = rho
        t0 += ch.tau
    return out


_HEADER = struct.Struct("<4sBBHIIdddd")
_MAGIC = b"ZSCH"


def dump_channel(ch: MeasurementChannel, det: DetectorModel, path) -> None:
    """Write a channel snapshot: fixed header + row-major complex64 entries,
    little-endian.  Meant for regression snapshots, hence the reduced
    precision."""
    sigma = det.sigma if det.sigma is not None else float("nan")
    header = _HEADER.pack(_MAGIC, 1, _METHOD_TAGS[ch.method], 0, ch.dim, 0,
                          ch.tau, ch.t0, det.lam, sigma)
    entries = np.ascontiguousarray(ch.tensor, dtype=np.complex64)
    if isinstance(path, (str, bytes)) or hasattr(path, "__fspath__"):
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(entries.astype("<c8").tobytes())
    else:
        path.write(header)
        path.write(entries.astype("<c8").tobytes())


def load_channel(path):
    """Read a channel snapshot written by dump_channel.

    Returns (tensor, info) where info carries the header fields."""
    if isinstance(path, (str, bytes)) or hasattr(path, "__fspath__"):
        with open(path, "rb") as fh:
            raw = fh.read()
    else:
        raw = path.read()
    if len(raw) < _HEADER.size or raw[:4] != _MAGIC:
        raise ValueError("not a channel snapshot")
    magic, version, tag, _, dim, _, tau, t0, lam, sigma = _HEADER.unpack_from(raw)
    if version != 1:
        raise ValueError(f"unsupported snapshot version {version}")
    body = np.frombuffer(raw, dtype="<c8", offset=_HEADER.size)
    if body.size != dim ** 4:
        raise ValueError("snapshot body size does not match the header dimension")
    tensor = body.astype(complex).reshape((dim,) * 4)
    info = {"method": _TAG_METHODS[tag], "dim": dim, "tau": tau, "t0": t0,
            "lambda": lam, "sigma": None if np.isnan(sigma) else sigma}
    return tensor, info

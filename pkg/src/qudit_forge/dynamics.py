"""Density-matrix propagation: ideal gates, rotating-wave pulses, lab-frame pulses.

All pulse-level propagators work on the full eigenbasis of the static
Hamiltonian and return states in the *reference frame*, the interaction
picture with respect to the nominal level energies. In that frame an ideal
rotation ``P_{mu nu}(theta, phi)`` on the qutrit is exactly what a calibrated,
resonant, infinitely short pulse does, so pulse-level results compare
directly with :func:`apply_ideal`.

Drive: ``B1 cos(2 pi f t - phase) M_z`` with ``t`` absolute sequence time.
Units: MHz, ns, tesla for matrix elements (MHz/T) and mT for amplitudes.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import polar

from .constants import MHZ_NS
from .gates import GateSequence, PlanarRotation, to_schedule
from .spin_model import (
    EigenSystem,
    NumericalError,
    QutritSubspace,
    SpinSystemParams,
    StaticField,
    diagonalize,
    magnetization_operator,
    select_qutrit,
)

__all__ = [
    "PulseSpec",
    "DensityMatrix",
    "DephasingModel",
    "PropagationContext",
    "Segment",
    "apply_ideal",
    "calibrate_amplitude",
    "lower_sequence",
    "pulse_propagator_rwa",
    "pulse_propagator_lab",
    "free_propagator",
    "evolve",
    "propagate_rwa",
    "propagate_lab",
    "apply_dephasing",
    "embed_qutrit",
    "qutrit_block",
    "DEFAULT_BAND",
    "MATCH_WINDOW",
]

DEFAULT_BAND = (320.0, 370.0)
# a carrier must sit within this distance (MHz) of some transition
MATCH_WINDOW = 10.0
_TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class PulseSpec:
    """Rectangular RF pulse.

    ``phase`` is the physical carrier phase. ``amplitude`` is the drive field in
    mT, or ``"calibrated"`` for the amplitude that makes a pi rotation on the
    addressed transition last exactly ``duration``.
    """

    carrier_f: float
    phase: float
    duration: float
    amplitude: object = "calibrated"
    shape: str = "rectangular"

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"pulse duration must be positive, got {self.duration}")
        if not self.carrier_f > 0:
            raise ValueError(f"carrier frequency must be positive, got {self.carrier_f}")
        if self.shape != "rectangular":
            raise ValueError(f"only rectangular pulses are supported, got {self.shape!r}")
        if self.amplitude != "calibrated" and not (
            np.isfinite(self.amplitude) and self.amplitude >= 0
        ):
            raise ValueError(f"amplitude must be >= 0 mT or 'calibrated', got {self.amplitude}")


@dataclass(frozen=True)
class Segment:
    """A pulse or free evolution placed on the absolute time axis (ns)."""

    t_start: float
    duration: float
    pulse: PulseSpec = None

    @property
    def t_end(self):
        return self.t_start + self.duration


@dataclass
class DensityMatrix:
    """Validated density matrix with its pseudo-pure scale and frame tag."""

    matrix: np.ndarray
    scale: float = 1.0
    frame: str = "rotating"

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.frame not in ("lab", "rotating", "eigenbasis"):
            raise ValueError(f"unknown frame {self.frame!r}")
        self.check()

    @property
    def dim(self):
        return self.matrix.shape[0]

    def check(self, psd=False):
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"density matrix must be square, got {m.shape}")
        if np.abs(m - m.conj().T).max() > 1e-10:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m).real - 1) > 1e-9:
            raise ValueError(f"trace {np.trace(m).real:.12g} != 1")
        if psd and np.linalg.eigvalsh(m).min() < -1e-9:
            raise ValueError("density matrix has negative eigenvalues")
        return self


@dataclass(frozen=True)
class DephasingModel:
    """Phenomenological dephasing of selected coherences.

    ``T2_map`` maps level pairs ``(i, j)`` of the propagated matrix to a phase
    memory time in microseconds.
    """

    T2_map: dict = field(default_factory=dict)
    envelope: str = "gaussian"

    def __post_init__(self):
        if self.envelope not in ("gaussian", "exponential", "off"):
            raise ValueError(f"unknown envelope {self.envelope!r}")
        clean = {}
        for (i, j), t2 in dict(self.T2_map).items():
            if self.envelope != "off" and not t2 > 0:
                raise ValueError(f"T2 must be positive, got {t2} for {(i, j)}")
            clean[(min(i, j), max(i, j))] = float(t2)
        object.__setattr__(self, "T2_map", clean)

    @property
    def enabled(self):
        return self.envelope != "off" and bool(self.T2_map)

    def decay(self, t_ns, T2_us):
        x = np.asarray(t_ns, dtype=float) * 1e-3 / T2_us
        if self.envelope == "gaussian":
            return np.exp(-(x**2))
        if self.envelope == "exponential":
            return np.exp(-np.abs(x))
        return np.ones_like(x)

    def remap(self, indices):
        """Translate qutrit-level pairs to indices of a larger matrix."""
        return DephasingModel(
            {(indices[i], indices[j]): t2 for (i, j), t2 in self.T2_map.items()}, self.envelope
        )


def apply_dephasing(rho, interval, model: DephasingModel, elapsed_before=0.0):
    """Damp mapped coherences over ``interval`` ns.

    The envelope is a function of total elapsed time, so the factor applied
    here is ``env(elapsed_before + interval) / env(elapsed_before)``.
    Populations are untouched.
    """
    rho = np.array(rho, dtype=complex)
    if model is None or not model.enabled or interval == 0:
        return rho
    if interval < 0:
        raise ValueError(f"negative interval {interval}")
    t0, t1 = float(elapsed_before), float(elapsed_before) + float(interval)
    for (i, j), t2 in model.T2_map.items():
        if max(i, j) >= rho.shape[0]:
            raise ValueError(f"coherence {(i, j)} outside a {rho.shape[0]}-level matrix")
        den = model.decay(t0, t2)
        factor = model.decay(t1, t2) / den if den > 0 else 0.0
        rho[i, j] *= factor
        rho[j, i] *= factor
    return rho


def _as_matrix(rho):
    m = rho.matrix if isinstance(rho, DensityMatrix) else rho
    return np.asarray(m, dtype=complex)


def apply_ideal(rho, seq, energies=None):
    """Instantaneous-gate evolution ``U rho U^+``.

    Delays evolve with ``exp(-2 pi i E_k t)``; ``energies`` (MHz) are the level
    energies in the frame of the gates and default to zero.
    """
    m = _as_matrix(rho)
    items = seq.items if isinstance(seq, GateSequence) else tuple(seq)
    d = m.shape[0]
    for it in items:
        if isinstance(it, PlanarRotation) and it.nu >= d:
            raise ValueError(f"rotation {it.transition} outside a {d}-level state")
    from .gates import sequence_unitary

    U = sequence_unitary(items, d, energies)
    return U @ m @ U.conj().T


# ---------------------------------------------------------------------------
# propagation context


def _align_phases(V, V_ref):
    ov = np.einsum("ik,ik->k", V_ref.conj(), V)
    ph = np.where(np.abs(ov) > 1e-12, ov / np.abs(ov), 1.0)
    return V / ph


@dataclass(frozen=True)
class PropagationContext:
    """Precomputed eigenbasis data for one spin; immutable and shareable.

    ``reference`` is the nominal context defining carriers, calibration and
    the reference frame (itself when ``None``).
    """

    params: SpinSystemParams
    field: StaticField
    eig: EigenSystem
    qutrit: QutritSubspace
    mz: np.ndarray
    reference: "PropagationContext" = field(default=None, repr=False)

    @classmethod
    def build(cls, params=SpinSystemParams(), field=StaticField(), reference=None):
        eig = diagonalize(params, field)
        V = eig.states
        if reference is not None:
            V = _align_phases(V, reference.eig.states)
            eig = EigenSystem(
                energies=eig.energies,
                states=V,
                labels=eig.labels,
                label_overlaps=eig.label_overlaps,
                offset=eig.offset,
                product_overlaps=eig.product_overlaps,
            )
            # the reference fixes which eigenstates form the qutrit
            idx = reference.qutrit.indices
            E = eig.energies
            qutrit = QutritSubspace(
                idx, float(E[idx[1]] - E[idx[0]]), float(E[idx[2]] - E[idx[1]]), reference.qutrit.labels
            )
        else:
            qutrit = select_qutrit(eig)
        mz = V.conj().T @ magnetization_operator(params, "z") @ V
        return cls(params, field, eig, qutrit, mz, reference)

    @property
    def ref(self):
        return self if self.reference is None else self.reference

    @property
    def energies(self):
        # absolute level energies up to one common offset shared with the reference
        return self.eig.energies + (self.eig.offset - self.ref.eig.offset)

    @property
    def dim(self):
        return len(self.eig.energies)

    def levels(self, transition):
        a, b = transition
        idx = self.qutrit.indices
        return idx[a], idx[b]

    def frequency(self, transition):
        k, l = self.levels(transition)
        E = self.energies
        return float(E[l] - E[k])


def _context(spin):
    ctx = getattr(spin, "context", spin)
    if not isinstance(ctx, PropagationContext):
        raise TypeError(f"expected a PropagationContext or SpinInstance, got {type(spin).__name__}")
    return ctx


def embed_qutrit(rho3, spin):
    """Place a 3x3 qutrit matrix into the full eigenbasis."""
    ctx = _context(spin)
    rho3 = _as_matrix(rho3)
    full = np.zeros((ctx.dim, ctx.dim), dtype=complex)
    idx = np.array(ctx.qutrit.indices)
    full[np.ix_(idx, idx)] = rho3
    return full


def qutrit_block(rho, spin):
    ctx = _context(spin)
    idx = np.array(ctx.qutrit.indices)
    return _as_matrix(rho)[np.ix_(idx, idx)]


def calibrate_amplitude(spin, transition, t_pi):
    """Drive amplitude (mT) giving a pi rotation in ``t_pi`` ns on resonance.

    ``B1 = 1 / (2 t_pi |<mu|M_z|nu>|)``.
    """
    ctx = _context(spin)
    if not t_pi > 0:
        raise ValueError(f"t_pi must be positive, got {t_pi}")
    k, l = ctx.levels(transition)
    m = abs(ctx.mz[k, l])
    if m < 1e-9:
        raise ValueError(f"transition {transition} is not addressable (zero matrix element)")
    return 1.0 / (2 * t_pi * MHZ_NS * m) * 1e3


def _drive_tesla(pulse, ctx, k, l):
    if pulse.amplitude == "calibrated":
        m = abs(ctx.ref.mz[k, l])
        return 1.0 / (2 * pulse.duration * MHZ_NS * m)
    return pulse.amplitude * 1e-3


def lower_sequence(seq, spin, t_pi=360.0, spacing="centers", t0=0.0, items=None):
    """Turn a gate sequence into timed pulse segments on the reference spin.

    Carriers sit on the nominal transition frequencies, amplitudes are
    calibrated for ``t_pi`` and the carrier phase is shifted by the phase of
    the drive matrix element so the rotation axis is exactly ``phi``.
    """
    ref = _context(spin).ref
    amp = {tr: calibrate_amplitude(ref, tr, t_pi) for tr in ((0, 1), (1, 2))}
    segs, t = [], float(t0)
    for rec in to_schedule(seq, t_pi=t_pi, spacing=spacing, items=items):
        if rec.kind == "pulse":
            tr = tuple(rec.transition)
            if tr not in amp:
                raise ValueError(f"transition {tr} is not driven directly")
            k, l = ref.levels(tr)
            if rec.duration_ns > 0:
                phase = rec.phi + np.angle(ref.mz[k, l])
                pulse = PulseSpec(ref.frequency(tr), phase, rec.duration_ns, amp[tr])
                segs.append(Segment(t, rec.duration_ns, pulse))
        elif rec.duration_ns > 0:
            segs.append(Segment(t, rec.duration_ns))
        t += rec.duration_ns
    return segs


def _couplings(ctx, tol=1e-6):
    m = np.abs(ctx.ref.mz)
    mask = m > tol * m.max()
    np.fill_diagonal(mask, False)
    return mask


def _addressed(ctx, carrier):
    E = ctx.ref.energies
    gaps = E[None, :] - E[:, None]
    mask = _couplings(ctx) & (gaps > 0)
    k, l = np.nonzero(mask)
    dist = np.abs(gaps[k, l] - carrier)
    order = np.argsort(dist)
    if dist[order[0]] > MATCH_WINDOW:
        near = ", ".join(
            f"({k[o]},{l[o]}) at {gaps[k[o], l[o]]:.3f} MHz" for o in order[:3]
        )
        raise ValueError(
            f"carrier {carrier:.3f} MHz matches no transition within {MATCH_WINDOW} MHz; "
            f"nearest: {near}"
        )
    return int(k[order[0]]), int(l[order[0]])


def _retained_edges(ctx, addressed, band, crosstalk):
    edges = [addressed]
    if crosstalk:
        E = ctx.ref.energies
        mask = _couplings(ctx)
        lo, hi = band
        for k in range(ctx.dim):
            for l in range(ctx.dim):
                f = E[l] - E[k]
                if mask[k, l] and lo <= f <= hi and (k, l) != addressed:
                    edges.append((k, l))
    return edges


def _frame(ctx, edges, carrier):
    """Per-pulse frame energies making every retained coupling static."""
    E_ref = ctx.ref.energies
    omega = E_ref.copy()
    adj = {}
    for k, l in edges:
        adj.setdefault(k, []).append((l, +1))
        adj.setdefault(l, []).append((k, -1))
    root = edges[0][0]
    seen = {root}
    kept = []
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v, sgn in adj.get(u, []):
            if v not in seen:
                seen.add(v)
                omega[v] = omega[u] + sgn * carrier
                queue.append(v)
    for k, l in edges:
        # drop couplings that cannot be made static together with the rest
        if abs(omega[l] - omega[k] - carrier) < 1e-9:
            kept.append((k, l))
    return omega, kept


def free_propagator(spin, duration):
    """Reference-frame free evolution: ``diag(exp(-2 pi i (E - E_ref) t))``."""
    ctx = _context(spin)
    det = ctx.energies - ctx.ref.energies
    return np.diag(np.exp(-1j * _TWO_PI * det * duration * MHZ_NS))


def pulse_propagator_rwa(spin, segment: Segment, band=DEFAULT_BAND, crosstalk=True):
    """Reference-frame propagator of one rectangular pulse under the RWA.

    The addressed transition is the one closest to the carrier. With
    ``crosstalk`` the co-rotating terms of every other transition in ``band``
    are kept; counter-rotating terms are dropped.
    """
    ctx = _context(spin)
    p = segment.pulse
    addressed = _addressed(ctx, p.carrier_f)
    edges = _retained_edges(ctx, addressed, band, crosstalk)
    omega, edges = _frame(ctx, edges, p.carrier_f)
    B1 = _drive_tesla(p, ctx, *addressed)
    H = np.diag(ctx.energies - omega).astype(complex)
    for k, l in edges:
        c = 0.5 * B1 * ctx.mz[k, l] * np.exp(-1j * p.phase)
        H[k, l] += c
        H[l, k] += np.conj(c)
    w, V = np.linalg.eigh(H)
    U = (V * np.exp(-1j * _TWO_PI * w * segment.duration * MHZ_NS)) @ V.conj().T
    shift = _TWO_PI * (omega - ctx.ref.energies) * MHZ_NS
    F0 = np.exp(1j * shift * segment.t_start)
    F1 = np.exp(1j * shift * segment.t_end)
    return F1.conj()[:, None] * U * F0[None, :]


def lab_step_bound(carrier):
    """Largest step (ns) that resolves a carrier of ``carrier`` MHz."""
    return 1.0 / (20 * carrier * MHZ_NS)


def pulse_propagator_lab(spin, segment: Segment, dt=0.05, extrapolate=True):
    """Reference-frame propagator of one pulse with the full lab-frame drive.

    ``H0 + b(t) M_z`` on all levels, no rotating-wave approximation. Each step
    uses sixth-order Magnus; with ``extrapolate`` the results for ``dt`` and
    ``dt/2`` are Richardson-combined and projected back onto the unitary group,
    which removes the leading error of the far-detuned ESR couplings.
    """
    ctx = _context(spin)
    p = segment.pulse
    bound = lab_step_bound(p.carrier_f)
    if dt > bound * (1 + 1e-12):
        raise ValueError(
            f"dt={dt} ns too coarse for a {p.carrier_f:.3f} MHz carrier; need dt <= {bound:.4g} ns"
        )
    k, l = _addressed(ctx, p.carrier_f)
    B1 = _drive_tesla(p, ctx, k, l)
    U, shift = _magnus6(ctx, segment, dt, B1)
    if extrapolate:
        U_half, _ = _magnus6(ctx, segment, dt / 2, B1)
        U, _ = polar((64 * U_half - U) / 63)
    # back to the reference frame; the constant shift is a global phase
    Er = ctx.ref.energies
    F0 = np.exp(1j * _TWO_PI * (Er - shift) * segment.t_start * MHZ_NS)
    F1 = np.exp(1j * _TWO_PI * (Er - shift) * segment.t_end * MHZ_NS)
    return F1[:, None] * U * F0.conj()[None, :]


def _magnus6(ctx, segment, dt, B1):
    """Lab-frame sixth-order Magnus propagator (Schroedinger picture, energies
    measured from their mean) with three Gauss points per step."""
    p = segment.pulse
    n = max(1, int(np.ceil(segment.duration / dt - 1e-9)))
    h = segment.duration / n
    E = ctx.energies
    shift = E.mean()
    hu = h * MHZ_NS
    H0 = np.diag(E - shift).astype(complex)
    M = ctx.mz
    starts = segment.t_start + h * np.arange(n)
    # sixth-order Magnus with three Gauss-Legendre nodes
    c = np.sqrt(15) / 10
    b = [
        B1 * np.cos(_TWO_PI * p.carrier_f * (starts + h * x) * MHZ_NS - p.phase)
        for x in (0.5 - c, 0.5, 0.5 + c)
    ]
    f = -1j * _TWO_PI * hu
    a1 = f * (H0[None] + b[1][:, None, None] * M[None])
    a2 = (f * np.sqrt(15) / 3 * (b[2] - b[0]))[:, None, None] * M[None]
    a3 = (f * 10 / 3 * (b[2] - 2 * b[1] + b[0]))[:, None, None] * M[None]
    comm = lambda x, y: x @ y - y @ x
    c1 = comm(a1, a2)
    c2 = -comm(a1, 2 * a3 + c1) / 60
    omega = a1 + a3 / 12 + comm(-20 * a1 - a3 + c1, a2 + c2) / 240
    K = 1j * omega
    K = 0.5 * (K + np.conj(np.swapaxes(K, 1, 2)))
    w, V = np.linalg.eigh(K)
    steps = (V * np.exp(-1j * w)[:, None, :]) @ np.conj(np.swapaxes(V, 1, 2))
    return _ordered_product(steps), shift


def _ordered_product(steps):
    """``steps[-1] @ ... @ steps[0]`` by pairwise reduction."""
    while len(steps) > 1:
        if len(steps) % 2:
            tail = steps[-1:]
            steps = steps[:-1]
        else:
            tail = None
        steps = steps[1::2] @ steps[0::2]
        if tail is not None:
            steps = np.concatenate([steps, tail])
    return steps[0]


def evolve(rho, segments: Sequence[Segment], spin, method="rwa", dephasing=None,
           elapsed_before=0.0, band=DEFAULT_BAND, crosstalk=True, dt=0.05):
    """Propagate a reference-frame density matrix through timed segments."""
    ctx = _context(spin)
    m = _as_matrix(rho)
    if m.shape != (ctx.dim, ctx.dim):
        raise ValueError(f"state has shape {m.shape}, spin has {ctx.dim} levels")
    if method not in ("rwa", "lab"):
        raise ValueError(f"unknown method {method!r}")
    elapsed = float(elapsed_before)
    for seg in segments:
        if seg.pulse is None:
            U = free_propagator(ctx, seg.duration)
        elif method == "rwa":
            U = pulse_propagator_rwa(ctx, seg, band, crosstalk)
        else:
            U = pulse_propagator_lab(ctx, seg, dt)
        m = U @ m @ U.conj().T
        if dephasing is not None:
            m = apply_dephasing(m, seg.duration, dephasing, elapsed)
        elapsed += seg.duration
    if not np.all(np.isfinite(m)):
        raise NumericalError("non-finite density matrix after propagation")
    return m


def _segments(seq, ctx, t_pi, spacing, t0):
    if isinstance(seq, GateSequence):
        return lower_sequence(seq, ctx, t_pi, spacing, t0)
    seq = list(seq)
    if all(isinstance(s, Segment) for s in seq):
        return seq
    raise TypeError("expected a GateSequence or a list of Segment")


def propagate_rwa(rho, seq, spin, t_pi=360.0, spacing="centers", t0=0.0, **kwargs):
    """Finite-pulse propagation under the rotating-wave approximation.

    ``rho`` is a full-basis reference-frame state (a 3x3 qutrit state is
    embedded and the full matrix returned).
    """
    ctx = _context(spin)
    m = _as_matrix(rho)
    if m.shape == (3, 3) and ctx.dim != 3:
        m = embed_qutrit(m, ctx)
    return evolve(m, _segments(seq, ctx, t_pi, spacing, t0), ctx, "rwa", **kwargs)


def propagate_lab(rho, seq, spin, dt=0.05, t_pi=360.0, spacing="centers", t0=0.0, **kwargs):
    """Finite-pulse propagation with the full time-dependent drive."""
    ctx = _context(spin)
    m = _as_matrix(rho)
    if m.shape == (3, 3) and ctx.dim != 3:
        m = embed_qutrit(m, ctx)
    return evolve(m, _segments(seq, ctx, t_pi, spacing, t0), ctx, "lab", dt=dt, **kwargs)

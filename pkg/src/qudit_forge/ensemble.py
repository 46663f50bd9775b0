"""Inhomogeneous ensembles: strain sampling, Hahn echoes, T2*, ensemble tomography.

Every instance is a full spin Hamiltonian with strained parameters. States
live in the reference frame of the nominal spin (see :mod:`dynamics`), so an
instance's level shifts show up as slow free-evolution phases.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from .constants import MHZ_NS
from .dynamics import (
    DephasingModel,
    PropagationContext,
    PulseSpec,
    apply_dephasing,
    Segment,
    calibrate_amplitude,
    embed_qutrit,
    evolve,
    free_propagator,
    lower_sequence,
)
from .gates import GateSequence, PlanarRotation, planar_rotation_matrix
from .spin_model import SpinSystemParams, StaticField, boltzmann_populations
from .tomography import (
    EPS_WARN,
    Q_IDS,
    TomographyPlan,
    TomographyRecord,
    build_plan,
    normalize_intensities,
    q_from_intensity,
)

__all__ = [
    "EnsembleSpec",
    "SpinInstance",
    "EchoTrace",
    "DetectionSettings",
    "T2Star",
    "sample_ensemble",
    "hahn_echo",
    "echo_signal",
    "echo_intensity",
    "estimate_t2_star",
    "instrument_width",
    "detection_filter_spread",
    "initial_state_unitary",
    "ensemble_experiment",
    "thermal_state",
    "matched_sigma",
]


@dataclass(frozen=True)
class EnsembleSpec:
    """Gaussian strain of one parameter group.

    ``hyperfine`` scales ``A_par`` and ``A_perp`` by ``1 + eps`` (one common
    factor, or two with ``independent``); ``zeeman`` scales the three
    g-factors by one common factor. ``gauss-hermite`` places all nodes of a
    Gaussian quadrature for the normal distribution truncated at ``cutoff``
    standard deviations.
    """

    strain_target: str = "hyperfine"
    relative_sigma: float = 0.0015
    sampling: str = "gauss-hermite"
    n_points: int = 41
    seed: int = 0
    independent: bool = False
    cutoff: float = 4.0

    def __post_init__(self):
        if self.strain_target not in ("hyperfine", "zeeman"):
            raise ValueError(f"strain_target must be hyperfine or zeeman, got {self.strain_target!r}")
        if self.sampling not in ("gauss-hermite", "monte-carlo"):
            raise ValueError(f"sampling must be gauss-hermite or monte-carlo, got {self.sampling!r}")
        if not self.relative_sigma >= 0:
            raise ValueError(f"relative_sigma must be >= 0, got {self.relative_sigma}")
        if self.n_points < 1:
            raise ValueError("n_points must be positive")
        if self.sampling == "gauss-hermite" and self.n_points % 2 == 0:
            raise ValueError("gauss-hermite needs an odd number of nodes (center node at nominal)")
        if self.independent and self.strain_target != "hyperfine":
            raise ValueError("independent strain is only defined for the hyperfine couplings")


@dataclass(frozen=True)
class SpinInstance:
    params: SpinSystemParams
    weight: float
    context: PropagationContext = field(repr=False)
    epsilon: tuple = (0.0,)

    @property
    def eig(self):
        return self.context.eig


def _strained(nominal, target, eps):
    if target == "hyperfine":
        e1, e2 = (eps[0], eps[0]) if len(eps) == 1 else eps
        return nominal.replace(A_par=nominal.A_par * (1 + e1), A_perp=nominal.A_perp * (1 + e2))
    s = 1 + eps[0]
    return nominal.replace(g_x=nominal.g_x * s, g_y=nominal.g_y * s, g_z=nominal.g_z * s)


def _gauss_nodes(n, cutoff):
    """Gauss quadrature for the standard normal truncated to +-cutoff.

    Recurrence coefficients come from a discretized Stieltjes procedure on a
    fine Gauss-Legendre grid; nodes and weights from the Jacobi matrix.
    """
    y, wy = leggauss(max(8 * n, 400))
    x = cutoff * y
    w = wy * np.exp(-x**2 / 2)
    w = w / w.sum()
    a = np.zeros(n)
    b = np.zeros(n)
    p_prev = np.zeros_like(x)
    p = np.ones_like(x)
    norm = 1.0
    for k in range(n):
        a[k] = np.sum(w * x * p**2) / norm
        p_next = (x - a[k]) * p - (b[k] if k else 0.0) * p_prev
        norm_next = np.sum(w * p_next**2)
        if k + 1 < n:
            b[k + 1] = norm_next / norm
        p_prev, p, norm = p, p_next, norm_next
    J = np.diag(a) + np.diag(np.sqrt(b[1:]), 1) + np.diag(np.sqrt(b[1:]), -1)
    nodes, V = np.linalg.eigh(J)
    weights = V[0] ** 2
    # exact symmetry about the center node
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return nodes, weights / weights.sum()


def sample_ensemble(spec: EnsembleSpec = EnsembleSpec(), nominal=SpinSystemParams(), field=StaticField()):
    """Strained spin instances with weights summing to one."""
    ref = PropagationContext.build(nominal, field)
    if spec.relative_sigma == 0:
        return [SpinInstance(nominal, 1.0, ref, (0.0,))]
    dims = 2 if spec.independent else 1
    if spec.sampling == "gauss-hermite":
        x, w = _gauss_nodes(spec.n_points, spec.cutoff)
        if dims == 1:
            eps, wts = x[:, None], w
        else:
            g1, g2 = np.meshgrid(x, x, indexing="ij")
            eps = np.column_stack([g1.ravel(), g2.ravel()])
            wts = np.outer(w, w).ravel()
    else:
        rng = np.random.default_rng(spec.seed)
        eps = rng.standard_normal((spec.n_points, dims))
        wts = np.full(spec.n_points, 1.0 / spec.n_points)
    eps = eps * spec.relative_sigma
    out = []
    for e, wt in zip(eps, wts):
        params = _strained(nominal, spec.strain_target, tuple(float(v) for v in e))
        ctx = ref if np.all(e == 0) else PropagationContext.build(params, field, reference=ref)
        out.append(SpinInstance(params, float(wt), ctx, tuple(float(v) for v in e)))
    return out


def matched_sigma(spec: EnsembleSpec, target, transition=(0, 1), nominal=SpinSystemParams(),
                  field=StaticField(), h=1e-5):
    """Relative sigma for ``target`` strain giving the same spread of
    ``transition`` as ``spec`` (first-order sensitivities)."""
    ref = PropagationContext.build(nominal, field)

    def slope(tgt):
        ctx = PropagationContext.build(_strained(nominal, tgt, (h,)), field, reference=ref)
        return (ctx.frequency(transition) - ref.frequency(transition)) / h

    return spec.relative_sigma * abs(slope(spec.strain_target) / slope(target))


# ---------------------------------------------------------------------------
# Hahn-echo detection


@dataclass(frozen=True)
class DetectionSettings:
    """Hahn-echo read-out.

    ``tau`` is the center-to-center spacing of the pi/2 and pi pulses; the echo
    is sampled every ``dt`` ns within ``window`` ns of its center. The
    detection instrument is incoherent with the sequence; ``phase_cycle``
    common carrier phases are averaged to model that. ``exorcycle`` adds the
    four-step pi-pulse phase cycle that removes unrefocused (FID) pathways.
    """

    t_pi: float = 750.0
    tau: float = 4000.0
    window: float = 2000.0
    dt: float = 10.0
    phase_cycle: int = 8
    exorcycle: bool = True
    mode: str = "rwa"
    crosstalk: bool = True
    lab_dt: float = 0.05

    def __post_init__(self):
        if self.mode not in ("rwa", "lab", "ideal"):
            raise ValueError(f"unknown detection mode {self.mode!r}")
        if self.tau < self.window + self.t_pi / 2 + self.t_pi / 4:
            raise ValueError("tau too short: the echo window overlaps the detection pulses")
        if self.phase_cycle < 1:
            raise ValueError("phase_cycle must be >= 1")

    @property
    def grid(self):
        n = int(round(self.window / self.dt))
        return self.dt * np.arange(-n, n + 1)


@dataclass(frozen=True)
class EchoTrace:
    """Complex echo (in-phase + i quadrature) on a uniform grid around its center."""

    t: np.ndarray
    signal: np.ndarray
    transition: tuple = None
    instrument_width: float = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if len(t) > 2 and np.ptp(np.diff(t)) > 1e-9 * max(1.0, abs(t).max()):
            raise ValueError("echo traces need a uniform time grid")

    def to_csv_rows(self):
        return [(float(a), float(z.real), float(z.imag)) for a, z in zip(self.t, self.signal)]


class T2Star(NamedTuple):
    value: float
    instrument_limited: bool


def _pulse_pair(ref, transition, settings, phase):
    amp = calibrate_amplitude(ref, transition, settings.t_pi)
    k, l = ref.levels(transition)
    ph = np.angle(ref.mz[k, l]) + phase
    f = ref.frequency(transition)
    return (
        PulseSpec(f, ph, settings.t_pi / 2, amp),
        PulseSpec(f, ph, settings.t_pi, amp),
    )


def echo_signal(rho, spin, transition, settings: DetectionSettings = DetectionSettings(),
                t0=0.0, pulses=None, dephasing=None, elapsed_before=0.0):
    """Phase-cycled echo of one spin, sampled on ``settings.grid`` around the echo center.

    ``rho`` is a full-basis reference-frame state at time ``t0``. ``pulses``
    optionally overrides the (pi/2, pi) detection pulses.
    """
    ctx = getattr(spin, "context", spin)
    ref = ctx.ref
    k, l = ctx.levels(transition)
    grid = settings.grid
    det = (ctx.energies[l] - ctx.energies[k]) - (ref.energies[l] - ref.energies[k])
    total = np.zeros(len(grid), dtype=complex)
    n = settings.phase_cycle
    steps = 4 if settings.exorcycle else 1
    for j in range(n):
        phi = 2 * np.pi * j / n
        for e in range(steps):
            # pi-pulse phase steps of 90 deg with alternating receiver sign keep
            # only the refocused pathway
            chi = e * np.pi / 2
            if pulses is None:
                p1, p2 = _pulse_pair(ref, transition, settings, phi)
            else:
                p1, p2 = (replace(p, phase=p.phase + phi) for p in pulses)
            p2 = replace(p2, phase=p2.phase + chi)
            if settings.mode == "ideal":
                c1 = t0
                m = _ideal_detection(rho, ctx, transition, p1, p2, settings.tau)
                t_end = c1 + settings.tau
            else:
                c1 = t0 + p1.duration / 2
                gap = settings.tau - p1.duration / 2 - p2.duration / 2
                segs = [
                    Segment(t0, p1.duration, p1),
                    Segment(t0 + p1.duration, gap),
                    Segment(t0 + p1.duration + gap, p2.duration, p2),
                ]
                m = evolve(rho, segs, ctx, settings.mode, dephasing=dephasing,
                           elapsed_before=elapsed_before, crosstalk=settings.crosstalk,
                           dt=settings.lab_dt)
                t_end = segs[-1].t_end
            t_echo = c1 + 2 * settings.tau
            t = t_echo + grid - t_end
            s = ctx.mz[k, l] * m[l, k] * np.exp(-2j * np.pi * det * t * MHZ_NS)
            total += s * np.exp(-1j * phi) * (-1) ** e
    return total / (n * steps)


def _ideal_detection(rho, ctx, transition, p1, p2, tau):
    """Instantaneous pi/2 and pi at the pulse centers, free evolution between."""
    ref = ctx.ref
    k, l = ref.levels(transition)
    gate_phi = lambda p: p.phase - np.angle(ref.mz[k, l])
    d = ctx.dim
    idx = ctx.qutrit.indices
    R = lambda th, ph: embed_qutrit(
        planar_rotation_matrix(3, PlanarRotation(*transition, th, ph)), ctx
    ) + np.diag([0.0 if i in idx else 1.0 for i in range(d)])
    U = R(np.pi, gate_phi(p2)) @ free_propagator(ctx, tau) @ R(np.pi / 2, gate_phi(p1))
    return U @ rho @ U.conj().T


def _weighted(instances, fn, workers=1):
    """Weighted sum of per-instance results in fixed instance order."""
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, instances))
    else:
        parts = [fn(inst) for inst in instances]
    total = None
    for inst, part in zip(instances, parts):
        term = _scale(part, inst.weight)
        total = term if total is None else _add(total, term)
    return total


def _scale(x, w):
    if isinstance(x, dict):
        return {k: v * w for k, v in x.items()}
    return x * w


def _add(a, b):
    if isinstance(a, dict):
        return {k: a[k] + b[k] for k in a}
    return a + b


def thermal_state(spin, T):
    ctx = getattr(spin, "context", spin)
    return np.diag(boltzmann_populations(ctx.eig, T)).astype(complex)


def hahn_echo(instances, transition, tau=4000.0, detection_pulses=None, T=1.4,
              settings: DetectionSettings = None, rho=None, workers=1):
    """Ensemble-averaged Hahn echo from thermal equilibrium (or ``rho``).

    ``detection_pulses`` is an optional (pi/2, pi) :class:`PulseSpec` pair.
    """
    transition = tuple(transition)
    if transition not in ((0, 1), (1, 2)):
        raise ValueError(f"echoes are detected on (0, 1) or (1, 2), got {transition}")
    settings = settings or DetectionSettings(tau=tau)
    if settings.tau != tau:
        settings = replace(settings, tau=tau)

    def one(inst):
        r = thermal_state(inst, T) if rho is None else rho
        return echo_signal(r, inst, transition, settings, pulses=detection_pulses)

    signal = _weighted(list(instances), one, workers)
    t_pi = detection_pulses[1].duration if detection_pulses else settings.t_pi
    width = instrument_width(t_pi, settings.window, settings.dt)
    return EchoTrace(settings.grid.copy(), signal, transition, width)


def echo_intensity(trace_or_signal, dt=None, phase_ref=0.0):
    """Fourier amplitude at resonance: the windowed echo integral, phase-corrected."""
    if isinstance(trace_or_signal, EchoTrace):
        sig = trace_or_signal.signal
        dt = trace_or_signal.t[1] - trace_or_signal.t[0]
    else:
        sig = np.asarray(trace_or_signal)
    return complex(np.sum(sig) * dt * np.exp(-1j * phase_ref))


@lru_cache(maxsize=32)
def instrument_width(t_pi, window=2000.0, dt=10.0, span=20.0, n=801):
    """Echo half-width (1/e) of an infinitely broad line: the pulse-bandwidth limit.

    Two-level Hahn echo with rectangular pulses on a uniform detuning comb
    of +-``span`` MHz.
    """
    delta = np.linspace(-span, span, n)
    rabi = 1.0 / (2 * t_pi * MHZ_NS)  # MHz

    def pulse(theta_dur):
        # two-level propagator for each detuning, H = [[0, rabi/2], [rabi/2, delta]]
        H = np.zeros((n, 2, 2), complex)
        H[:, 0, 1] = H[:, 1, 0] = rabi / 2
        H[:, 1, 1] = delta
        w, V = np.linalg.eigh(H)
        return (V * np.exp(-2j * np.pi * w * theta_dur * MHZ_NS)[:, None, :]) @ np.conj(
            np.swapaxes(V, 1, 2)
        )

    tau = window + 2 * t_pi
    free = lambda t: np.stack([np.ones(n), np.exp(-2j * np.pi * delta * t * MHZ_NS)], axis=1)
    psi = np.zeros((n, 2), complex)
    psi[:, 0] = 1
    psi = np.einsum("nij,nj->ni", pulse(t_pi / 2), psi)
    psi = psi * free(tau - 0.75 * t_pi)
    psi = np.einsum("nij,nj->ni", pulse(t_pi), psi)
    grid = dt * np.arange(-int(window / dt), int(window / dt) + 1)
    # echo at tau after the pi-pulse center
    t = tau - t_pi / 2 + grid
    coh = psi[:, 1] * np.conj(psi[:, 0])
    sig = (coh[None, :] * np.exp(-2j * np.pi * delta[None, :] * t[:, None] * MHZ_NS)).sum(axis=1)
    return _half_width(grid, np.abs(sig))[0]


def _crossing(t, mag, thr, idx, step):
    i = idx
    while 0 <= i + step < len(mag):
        j = i + step
        if mag[j] < thr:
            # linear interpolation between i and j
            f = (mag[i] - thr) / (mag[i] - mag[j])
            return t[i] + f * (t[j] - t[i])
        i = j
    return None


def _half_width(t, mag):
    peak = int(np.argmax(mag))
    thr = mag[peak] / np.e
    left = _crossing(t, mag, thr, peak, -1)
    right = _crossing(t, mag, thr, peak, +1)
    sides = [t[peak] - left] if left is not None else []
    if right is not None:
        sides.append(right - t[peak])
    if not sides:
        return None, peak
    return float(np.mean(sides)), peak


def estimate_t2_star(trace: EchoTrace):
    """Half-width at 1/e of the echo magnitude, relative to its peak.

    Left and right crossings are linearly interpolated and averaged. A trace
    without a crossing (no inhomogeneous decay inside the window) returns the
    pulse-bandwidth limit if known, else the half-window, flagged as
    instrument limited. So does any width within 5% of the bandwidth limit.
    """
    mag = np.abs(np.asarray(trace.signal))
    if mag.max() <= 0 or not np.all(np.isfinite(mag)):
        raise ValueError("echo trace has no peak (zero or non-finite signal)")
    width, _ = _half_width(np.asarray(trace.t), mag)
    limit = trace.instrument_width
    if width is None:
        fallback = limit if limit is not None else float(np.ptp(trace.t) / 2)
        return T2Star(float(fallback), True)
    limited = limit is not None and width <= 1.05 * limit
    return T2Star(width, limited)


def detection_filter_spread(instances, transition, t_pi, T=1.4, settings=None):
    """Weighted standard deviation (MHz) of instance detunings, weighted by
    each instance's contribution to the echo intensity."""
    settings = settings or DetectionSettings(t_pi=t_pi, phase_cycle=1)
    settings = replace(settings, t_pi=t_pi, phase_cycle=1)
    dets, contrib = [], []
    for inst in instances:
        ctx = inst.context
        k, l = ctx.levels(transition)
        dets.append((ctx.energies[l] - ctx.energies[k]) - (ctx.ref.energies[l] - ctx.ref.energies[k]))
        sig = echo_signal(thermal_state(inst, T), inst, transition, settings)
        contrib.append(inst.weight * abs(echo_intensity(sig, settings.dt)))
    dets, contrib = np.array(dets), np.array(contrib)
    contrib = contrib / contrib.sum()
    mean = np.sum(contrib * dets)
    return float(np.sqrt(np.sum(contrib * (dets - mean) ** 2)))


# ---------------------------------------------------------------------------
# ensemble tomography


def initial_state_unitary(initial_state):
    """Unitary on the qutrit mapping |0> to the requested initial state.

    ``initial_state`` is a basis index or a 3-vector (normalized here).
    """
    if np.isscalar(initial_state):
        k = int(initial_state)
        if k not in (0, 1, 2):
            raise ValueError(f"basis index must be 0, 1 or 2, got {initial_state}")
        W = np.eye(3, dtype=complex)
        W[:, [0, k]] = W[:, [k, 0]]
        return W
    v = np.asarray(initial_state, dtype=complex)
    if v.shape != (3,) or np.linalg.norm(v) == 0:
        raise ValueError(f"initial state must be a nonzero 3-vector, got {initial_state}")
    v = v / np.linalg.norm(v)
    Q, R = np.linalg.qr(np.column_stack([v, np.eye(3)]))
    W = Q[:, :3]
    W[:, 0] *= R[0, 0] / abs(R[0, 0])
    return W


def _qutrit_unitary(U3, ctx):
    d = ctx.dim
    idx = list(ctx.qutrit.indices)
    U = np.eye(d, dtype=complex)
    U[np.ix_(idx, idx)] = U3
    return U


def _run_items(rho, items, ctx, mode, t_pi, spacing, t0, dephasing, elapsed, crosstalk, lab_dt):
    """Propagate a list of rotations/delays; returns (rho, t_end)."""
    if not items:
        return rho, t0
    if mode == "ideal":
        for it in items:
            if isinstance(it, PlanarRotation):
                U = _qutrit_unitary(it.matrix(3), ctx)
                rho = U @ rho @ U.conj().T
            else:
                U = free_propagator(ctx, it.duration)
                rho = U @ rho @ U.conj().T
                if dephasing is not None:
                    rho = apply_dephasing(rho, it.duration, dephasing, elapsed)
                    elapsed += it.duration
                t0 += it.duration
        return rho, t0
    segs = lower_sequence(GateSequence(items=items), ctx, t_pi, spacing, t0, items=items)
    rho = evolve(rho, segs, ctx, mode, dephasing=dephasing, elapsed_before=elapsed,
                 crosstalk=crosstalk, dt=lab_dt)
    t_end = segs[-1].t_end if segs else t0
    return rho, t_end


def ensemble_experiment(instances, seq: GateSequence, plan: TomographyPlan = None, *,
                        initial_state=0, T=1.4, t_pi=360.0, mode="rwa", spacing="centers",
                        detection: DetectionSettings = None, dephasing: DephasingModel = None,
                        crosstalk=False, lab_dt=0.05, workers=1):
    """Simulated tomography of ``seq`` over a weighted spin ensemble.

    Per instance: thermal state, pseudo-pure preparation (pi/2 on f12 followed
    by complete loss of coherence), an ideal qutrit unitary taking |0> to
    ``initial_state``, the sequence up to its read-out point, then for each
    quantity the conversion pulses and a phase-cycled Hahn echo. Intensities
    are weight-averaged over the ensemble and normalized against simulated
    thermal and pseudo-pure echoes with the same detection settings.

    Only strain broadening is switched on by default: in-band crosstalk of
    the sequence pulses (``crosstalk``) and dephasing are opt-in.
    """
    plan = plan or build_plan()
    if detection is None:
        detection = DetectionSettings(mode="ideal" if mode == "ideal" else "rwa", crosstalk=crosstalk)
    instances = list(instances)
    if not instances:
        raise ValueError("empty ensemble")
    ref = instances[0].context.ref
    W3 = initial_state_unitary(initial_state)
    items = seq.before_detection()
    dq = dephasing.remap(ref.qutrit.indices) if dephasing is not None else None

    def one(inst):
        ctx = inst.context
        th = thermal_state(ctx, T)
        out = {}
        for tr in ((0, 1), (1, 2)):
            out[f"eq{tr[0]}{tr[1]}"] = echo_intensity(echo_signal(th, ctx, tr, detection), detection.dt)
        prep = PlanarRotation(1, 2, np.pi / 2, 0.0, role="prep")
        pp, _ = _run_items(th, [prep], ctx, mode, t_pi, spacing, 0.0, None, 0.0, crosstalk, lab_dt)
        pp = np.diag(np.diag(pp))
        for tr in ((0, 1), (1, 2)):
            out[f"pur{tr[0]}{tr[1]}"] = echo_intensity(echo_signal(pp, ctx, tr, detection), detection.dt)
        U0 = _qutrit_unitary(W3, ctx)
        rho = U0 @ pp @ U0.conj().T
        rho, t_det = _run_items(rho, list(items), ctx, mode, t_pi, spacing, 0.0, dq, 0.0,
                                crosstalk, lab_dt)
        for entry in plan:
            r, t1 = _run_items(rho, list(entry.conversion_pulses), ctx, mode, t_pi, spacing,
                               t_det, dq, t_det, crosstalk, lab_dt)
            sig = echo_signal(r, ctx, entry.detect_transition, detection, t0=t1,
                              dephasing=dq, elapsed_before=t1)
            out[entry.q_id] = echo_intensity(sig, detection.dt)
        return out

    raw = _weighted(instances, one, workers)
    # phase correction from the nominal spin's thermal echo
    phase = {}
    for tr in ((0, 1), (1, 2)):
        s = echo_signal(thermal_state(ref, T), ref, tr, detection)
        phase[tr] = np.angle(echo_intensity(s, detection.dt))
    def detected_on(key):
        if key in Q_IDS:
            return plan[key].detect_transition
        return (1, 2) if key.endswith("12") else (0, 1)

    corr = {key: val * np.exp(-1j * phase[detected_on(key)]) for key, val in raw.items()}

    # equilibrium population differences averaged over the ensemble
    i0, i1, i2 = ref.qutrit.indices

    def pop_diffs(inst):
        p = boltzmann_populations(inst.context.eig, T)
        return np.array([p[i0] - p[i1], p[i1] - p[i2]])

    dp_ens = _weighted(instances, pop_diffs)
    dp = {(0, 1): float(dp_ens[0]), (1, 2): float(dp_ens[1])}
    eps = float(np.real(corr["pur12"] / corr["eq12"]))
    alpha = normalize_intensities(corr["pur01"], corr["pur12"], corr["eq01"], corr["eq12"],
                                  (dp[(0, 1)], dp[(1, 2)]))
    q = {}
    for entry in plan:
        tr = entry.detect_transition
        key = f"eq{tr[0]}{tr[1]}"
        q[entry.q_id] = q_from_intensity(corr[entry.q_id], corr[key], dp[tr], alpha)
    flags = ("pseudo_pure_failed",) if abs(eps) > EPS_WARN else ()
    last_pi = seq.items[seq.detection_index] if seq.detection_index is not None else None
    return TomographyRecord(
        q_values=q,
        raw_intensities={k: corr[k] for k in Q_IDS},
        alpha=float(alpha),
        variant=seq.variant,
        permutation=tuple(seq.permutation),
        last_pi=last_pi,
        eq_intensities={"01": corr["eq01"], "12": corr["eq12"]},
        pur_intensities={"01": corr["pur01"], "12": corr["pur12"]},
        flags=flags,
    )

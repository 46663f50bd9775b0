"""Qudit gates, unitary-to-rotation compilation and refocusing insertion.

A planar rotation ``P_{mu nu}(theta, phi)`` acts on levels ``mu < nu`` as::

    cos(theta/2) (|mu><mu| + |nu><nu|)
      - i sin(theta/2) (e^{i phi} |nu><mu| + e^{-i phi} |mu><nu|)

Sequences are time ordered: ``items[0]`` is applied first.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .constants import MHZ_NS

__all__ = [
    "PlanarRotation",
    "Delay",
    "GateSequence",
    "RefocusSpec",
    "ScheduleRecord",
    "qft_unitary",
    "planar_rotation_matrix",
    "sequence_unitary",
    "decompose_unitary",
    "refocusing_block",
    "insert_refocusing",
    "to_schedule",
    "schedule_to_json",
    "schedule_from_json",
    "QUTRIT_TRANSITIONS",
]

QUTRIT_TRANSITIONS = ((0, 1), (1, 2))
SCHEDULE_SCHEMA = "qudit-forge.schedule"
SCHEDULE_VERSION = 1

_PI_TOL = 1e-9


def _wrap_phase(phi):
    """Map to (-pi, pi]."""
    phi = float(np.mod(phi + np.pi, 2 * np.pi) - np.pi)
    if phi <= -np.pi + 1e-15:
        phi = np.pi
    return phi


def _normalize(theta, phi):
    # P(theta, phi) is 4*pi periodic in theta; P(4pi - theta, phi + pi) == P(theta, phi)
    theta = float(np.mod(theta, 4 * np.pi))
    if theta > 2 * np.pi:
        theta, phi = 4 * np.pi - theta, phi + np.pi
    if abs(theta - 4 * np.pi) < 1e-15:
        theta = 0.0
    return theta, _wrap_phase(phi)


@dataclass(frozen=True)
class PlanarRotation:
    """Rotation by ``theta`` about an equatorial axis at angle ``phi`` on levels (mu, nu)."""

    mu: int
    nu: int
    theta: float
    phi: float = 0.0
    role: str = field(default="gate", compare=False)

    def __post_init__(self):
        mu, nu, phi = int(self.mu), int(self.nu), float(self.phi)
        if mu == nu or min(mu, nu) < 0:
            raise ValueError(f"invalid level pair ({self.mu}, {self.nu})")
        if mu > nu:
            mu, nu, phi = nu, mu, -phi
        theta, phi = _normalize(float(self.theta), phi)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)

    @property
    def transition(self):
        return (self.mu, self.nu)

    @property
    def is_pi(self):
        return abs(self.theta - np.pi) < _PI_TOL

    def matrix(self, d):
        return planar_rotation_matrix(d, self)

    def inverse(self):
        return replace(self, phi=self.phi + np.pi)


@dataclass(frozen=True)
class Delay:
    """Free evolution, ns."""

    duration: float

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError(f"negative delay {self.duration}")


@dataclass(frozen=True)
class RefocusSpec:
    tau: float = 2000.0
    free_phases: tuple = (0.0, 0.0, 0.0, 0.0, 0.0, -np.pi / 6)
    # False: realize residual diagonal phases as explicit pi-pair phase gates
    # instead of shifting carrier phases of the final block
    frame_tracking: bool = True

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        object.__setattr__(self, "free_phases", tuple(float(p) for p in self.free_phases))


@dataclass(frozen=True)
class GateSequence:
    """Time-ordered rotations and delays with refocusing bookkeeping.

    The ideal product of ``items`` equals
    ``exp(1j * global_phase) * Perm @ target`` where ``Perm |k> = |permutation[k]>``.
    ``detection_index`` marks the trailing pi pulse skipped when the state is
    read out at the last refocused instant; ``detection_permutation`` is the
    level permutation at that instant.
    """

    items: tuple = ()
    dim: int = 3
    permutation: tuple = None
    global_phase: float = 0.0
    variant: str = "none"
    detection_index: int = None
    detection_permutation: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        perm = tuple(range(self.dim)) if self.permutation is None else tuple(self.permutation)
        if sorted(perm) != list(range(self.dim)):
            raise ValueError(f"permutation {perm} is not a bijection on 0..{self.dim - 1}")
        object.__setattr__(self, "permutation", perm)
        if self.detection_permutation is None:
            object.__setattr__(self, "detection_permutation", perm)
        if self.variant not in ("A", "B", "none"):
            raise ValueError(f"unknown variant {self.variant!r}")
        for item in self.items:
            if isinstance(item, PlanarRotation) and item.nu >= self.dim:
                raise ValueError(f"rotation {item.transition} outside dimension {self.dim}")

    @property
    def rotations(self):
        return [it for it in self.items if isinstance(it, PlanarRotation)]

    @property
    def n_pulses(self):
        return len(self.rotations)

    def __len__(self):
        return len(self.items)

    def permutation_matrix(self, at_detection=False):
        perm = self.detection_permutation if at_detection else self.permutation
        P = np.zeros((self.dim, self.dim))
        for k, p in enumerate(perm):
            P[p, k] = 1.0
        return P

    def unitary(self, detunings=None, stop=None):
        return sequence_unitary(self.items[:stop], self.dim, detunings)

    def before_detection(self):
        """Items executed before the read-out point."""
        return self.items[: self.detection_index]

    def last_pi_unitary(self):
        """Ideal unitary of the items after the read-out point (identity if none)."""
        if self.detection_index is None:
            return np.eye(self.dim, dtype=complex)
        return sequence_unitary(self.items[self.detection_index :], self.dim)


def qft_unitary(d):
    """Discrete Fourier transform on ``d`` levels, entries ``exp(2 pi i mu nu / d) / sqrt(d)``."""
    d = int(d)
    if d < 1:
        raise ValueError("dimension must be at least 1")
    k = np.arange(d)
    return np.exp(2j * np.pi * np.outer(k, k) / d) / np.sqrt(d)


def planar_rotation_matrix(d, rot: PlanarRotation):
    if not 0 <= rot.mu < rot.nu < d:
        raise ValueError(f"levels ({rot.mu}, {rot.nu}) out of range for d={d}")
    U = np.eye(d, dtype=complex)
    c, s = np.cos(rot.theta / 2), np.sin(rot.theta / 2)
    U[rot.mu, rot.mu] = U[rot.nu, rot.nu] = c
    U[rot.nu, rot.mu] = -1j * s * np.exp(1j * rot.phi)
    U[rot.mu, rot.nu] = -1j * s * np.exp(-1j * rot.phi)
    return U


def sequence_unitary(items, d, detunings=None):
    """Ideal propagator of a time-ordered item list.

    Delays evolve freely with per-level ``detunings`` (MHz); zero by default.
    """
    U = np.eye(d, dtype=complex)
    det = np.zeros(d) if detunings is None else np.asarray(detunings, dtype=float)
    for item in items:
        if isinstance(item, PlanarRotation):
            U = planar_rotation_matrix(d, item) @ U
        elif isinstance(item, Delay):
            U = np.exp(-2j * np.pi * det * item.duration * MHZ_NS)[:, None] * U
        else:
            raise TypeError(f"unsupported sequence item {item!r}")
    return U


# ---------------------------------------------------------------------------
# decomposition


def _spanning_tree(d, connectivity):
    edges = set()
    for a, b in connectivity:
        a, b = int(a), int(b)
        if a == b or not (0 <= a < d and 0 <= b < d):
            raise ValueError(f"invalid transition ({a}, {b}) for d={d}")
        edges.add((min(a, b), max(a, b)))
    if d == 1:
        return [0], {0: None}
    rows, cols = zip(*edges) if edges else ((), ())
    graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(d, d))
    n_comp, _ = connected_components(graph, directed=False)
    if n_comp != 1:
        raise ValueError(f"connectivity {sorted(edges)} does not connect all {d} levels")
    order, pred = breadth_first_order(graph, 0, directed=False, return_predecessors=True)
    parent = {int(k): (None if pred[k] < 0 else int(pred[k])) for k in order}
    return [int(k) for k in order], parent


def _zeroing_rotation(x_a, x_b, a, b, zero_b):
    """Rotation on (a, b), a < b, that zeroes component b (or a) of ``(x_a, x_b)``."""
    if zero_b:
        keep, kill = x_a, x_b
    else:
        keep, kill = x_b, x_a
    if abs(kill) < 1e-15:
        return None
    if abs(keep) < 1e-15:
        theta, phase = np.pi, 0.0
    else:
        theta = 2 * np.arctan2(abs(kill), abs(keep))
        phase = np.angle(kill) - np.angle(keep) - np.pi / 2
    phi = phase if zero_b else -phase
    return PlanarRotation(a, b, theta, phi)


def _tree_distance(parent, src, dst, nodes):
    # BFS over the remaining tree
    adj = {n: set() for n in nodes}
    for n in nodes:
        p = parent.get(n)
        if p is not None and p in adj:
            adj[n].add(p)
            adj[p].add(n)
    dist, nxt = {dst: 0}, {dst: None}
    frontier = [dst]
    while frontier:
        new = []
        for u in frontier:
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    nxt[v] = u
                    new.append(v)
        frontier = new
    return dist, nxt


def decompose_unitary(U, connectivity=QUTRIT_TRANSITIONS, tol=1e-10):
    """Decompose a unitary into planar rotations on allowed transitions.

    Columns are eliminated leaf-first on a spanning tree of the connectivity
    graph (for a linear chain: last column first). The remaining diagonal is
    realized as pairs of pi rotations on tree edges. The product of the
    returned rotations equals ``exp(1j * global_phase) * U``.
    """
    U = np.asarray(U, dtype=complex)
    d = U.shape[0]
    if U.shape != (d, d):
        raise ValueError(f"expected a square matrix, got {U.shape}")
    if np.abs(U.conj().T @ U - np.eye(d)).max() > tol:
        raise ValueError("input is not unitary")
    order, parent = _spanning_tree(d, connectivity)

    W = U.copy()
    elim = []  # G_n ... G_1 W = D
    remaining = set(order)
    for leaf in reversed(order[1:]):
        dist, nxt = _tree_distance(parent, None, leaf, remaining)
        for j in sorted((n for n in remaining if n != leaf), key=lambda n: -dist[n]):
            k = nxt[j]
            a, b = min(j, k), max(j, k)
            rot = _zeroing_rotation(W[a, leaf], W[b, leaf], a, b, zero_b=(j == b))
            if rot is None:
                continue
            W = planar_rotation_matrix(d, rot) @ W
            elim.append(rot)
        remaining.discard(leaf)
    diag = np.angle(np.diag(W))

    # U = G_1^+ ... G_n^+ D = D (D^+ G_1^+ D) ... (D^+ G_n^+ D); apply rightmost first
    rots = []
    for g in reversed(elim):
        gi = g.inverse()
        rots.append(replace(gi, phi=gi.phi + diag[gi.mu] - diag[gi.nu]))

    items = list(rots)
    phase_rots, alpha = _diagonal_as_pi_pairs(diag, parent, order)
    items.extend(phase_rots)
    seq = GateSequence(items=items, dim=d, global_phase=alpha)
    err = np.abs(seq.unitary() - np.exp(1j * alpha) * U).max()
    if err > 1e-9:
        raise RuntimeError(f"decomposition round-trip error {err:.3g}")
    return seq


def _diagonal_as_pi_pairs(diag, parent, order):
    """Realize ``diag(exp(i diag))`` up to global phase with pi-rotation pairs.

    A pair ``P(pi, -x) P(pi, 0)`` on (mu, nu) multiplies mu by ``-exp(ix)`` and
    nu by ``-exp(-ix)``. Returns the rotations and ``alpha`` with
    ``product = exp(i alpha) diag``.
    """
    d = len(diag)
    rel = diag - diag[0]
    if np.all(np.abs(np.angle(np.exp(1j * rel))) < 1e-12):
        return [], float(-diag[0])
    edges = [(parent[n], n) for n in order[1:]]
    edges = [(min(e), max(e)) for e in edges]
    # level phases: pi + x_e on mu_e, pi - x_e on nu_e; solve for x and alpha
    A = np.zeros((d, len(edges) + 1))
    const = np.zeros(d)
    for k, (mu, nu) in enumerate(edges):
        A[mu, k] += 1.0
        A[nu, k] -= 1.0
        const[mu] += np.pi
        const[nu] += np.pi
    A[:, -1] = -1.0  # product phase = diag + alpha
    sol, *_ = np.linalg.lstsq(A, diag - const, rcond=None)
    rots = []
    for (mu, nu), x in zip(edges, sol[:-1]):
        rots.append(PlanarRotation(mu, nu, np.pi, 0.0, role="phase"))
        rots.append(PlanarRotation(mu, nu, np.pi, -x, role="phase"))
    return rots, float(sol[-1])


# ---------------------------------------------------------------------------
# refocusing


def _block_transitions(start):
    start = tuple(start)
    if start not in QUTRIT_TRANSITIONS:
        raise ValueError(f"refocusing blocks start on (0, 1) or (1, 2), got {start}")
    other = QUTRIT_TRANSITIONS[1] if start == QUTRIT_TRANSITIONS[0] else QUTRIT_TRANSITIONS[0]
    return [start, other, start, other, start]


def _swap_perm(a, b, d=3):
    p = list(range(d))
    p[a], p[b] = b, a
    return tuple(p)


def refocusing_block(start_transition=(0, 1), phases=(0.0,) * 5, tau=2000.0):
    """Five pi pulses alternating between the qutrit transitions.

    Six delays of ``tau`` surround the pulses so that every amplitude spends
    two intervals in each level. The block swaps the two levels not touched
    by ``start_transition``'s partner ordering: starting on (0, 1) swaps 1 and 2,
    starting on (1, 2) swaps 0 and 1.
    """
    phases = tuple(phases)
    if len(phases) != 5:
        raise ValueError("a refocusing block takes five phases")
    trans = _block_transitions(start_transition)
    items = [Delay(tau)]
    for (mu, nu), ph in zip(trans, phases):
        items += [PlanarRotation(mu, nu, np.pi, ph, role="refocus"), Delay(tau)]
    swap = (1, 2) if tuple(start_transition) == (0, 1) else (0, 1)
    return GateSequence(items=items, dim=3, permutation=_swap_perm(*swap))


def _monomial_perm(M):
    """Permutation of a monomial matrix: column k has its entry in row perm[k]."""
    return tuple(int(np.argmax(np.abs(M[:, k]))) for k in range(M.shape[1]))


def _pulse_from_matrix(Q, theta, role):
    """Read a planar rotation of known angle back from its matrix."""
    off = np.abs(Q - np.diag(np.diag(Q)))
    a, b = sorted(int(i) for i in np.unravel_index(np.argmax(off), Q.shape))
    phi = np.angle(1j * Q[b, a])
    return PlanarRotation(a, b, theta, phi, role=role)


def _adjacent(a, b):
    return abs(a - b) == 1


def insert_refocusing(seq: GateSequence, spec: RefocusSpec = RefocusSpec(), variant="A"):
    """Embed a refocusing block after every rotation with ``theta != pi``.

    Pi rotations of the input are absorbed into the permutation/phase
    bookkeeping. Residual diagonal phases are folded into carrier phases of
    the final block, or emitted as pi-pair phase gates when
    ``spec.frame_tracking`` is off. If the input ends with pi rotations, one pi pulse is emitted
    after the final block (the read-out point sits just before it) and chosen
    to restore the natural level order when parity allows. Pulse phases are
    tracked at emission time so the ideal product equals
    ``exp(1j*global_phase) * Perm @ seq.unitary()``.
    """
    if seq.dim != 3:
        raise ValueError("refocusing is defined for qutrits")
    if variant not in ("A", "B"):
        raise ValueError(f"variant must be 'A' or 'B', got {variant!r}")
    for item in seq.items:
        if isinstance(item, Delay):
            raise ValueError("insert_refocusing expects a pulse-only sequence")
        if item.transition not in QUTRIT_TRANSITIONS:
            raise ValueError(f"unsupported transition {item.transition}")
    rots = list(seq.items)
    gate_idx = [k for k, r in enumerate(rots) if not r.is_pi]
    if not gate_idx:
        return replace(seq, variant=variant)

    prefer = list(QUTRIT_TRANSITIONS) if variant == "A" else list(reversed(QUTRIT_TRANSITIONS))
    d = 3
    trailing = rots[gate_idx[-1] + 1 :]
    free = list(spec.free_phases)

    def absorb(M, rs):
        for r in rs:
            M = M @ r.matrix(d).conj().T
        return M

    def block_matrix(start):
        trans = _block_transitions(start)
        B = np.eye(d, dtype=complex)
        for mu, nu in trans:
            B = PlanarRotation(mu, nu, np.pi).matrix(d) @ B
        return B

    emitted = []
    M = absorb(np.eye(d, dtype=complex), rots[: gate_idx[0]])
    final_block_start = None
    last_pi = None
    for n, g in enumerate(gate_idx):
        L = rots[g].matrix(d)
        emitted.append(_pulse_from_matrix(M @ L @ M.conj().T, rots[g].theta, "gate"))
        is_last = n == len(gate_idx) - 1
        if not is_last:
            between = rots[g + 1 : gate_idx[n + 1]]
            nxt = rots[gate_idx[n + 1]]
            start = None
            for s in prefer:
                perm = _monomial_perm(absorb(block_matrix(s) @ M, between))
                if _adjacent(perm[nxt.mu], perm[nxt.nu]):
                    start = s
                    break
        else:
            options = []
            for s in prefer:
                if trailing:
                    for t in prefer:
                        T = PlanarRotation(*t, np.pi).matrix(d)
                        perm = _monomial_perm(T @ absorb(block_matrix(s) @ M, trailing))
                        options.append((perm != tuple(range(d)), s, t))
                else:
                    options.append((False, s, None))
            _, start, last_pi = min(options, key=lambda o: o[0])
            final_block_start = len(emitted)
        for mu, nu in _block_transitions(start):
            ph = free.pop(0) if free else 0.0
            pulse = PlanarRotation(mu, nu, np.pi, ph, role="refocus")
            emitted.append(pulse)
            M = pulse.matrix(d) @ M
        stop = gate_idx[n + 1] if not is_last else len(rots)
        M = absorb(M, rots[g + 1 : stop])

    T = np.eye(d) if last_pi is None else PlanarRotation(*last_pi, np.pi).matrix(d)
    if spec.frame_tracking:
        if last_pi is not None:
            emitted.append(PlanarRotation(*last_pi, np.pi, 0.0, role="last_pi"))
            M = T @ M
        emitted, M = _cancel_residual_phases(emitted, M, final_block_start)
    else:
        # explicit pi-pair phase gates between the final block and the last pi
        z = _residual_phases(T @ M)
        X = T.conj().T @ np.diag(np.exp(-1j * z)) @ T
        order, parent = _spanning_tree(d, QUTRIT_TRANSITIONS)
        pairs, _ = _diagonal_as_pi_pairs(np.angle(np.diag(X)), parent, order)
        for p in pairs:
            emitted.append(p)
            M = p.matrix(d) @ M
        if last_pi is not None:
            emitted.append(PlanarRotation(*last_pi, np.pi, 0.0, role="last_pi"))
            M = T @ M

    perm = _monomial_perm(M)
    beta = float(np.angle(M[perm[0], 0]))

    items = []
    detection_index = None
    for k, p in enumerate(emitted):
        if p.role == "refocus":
            items += [Delay(spec.tau), p]
            if k + 1 == len(emitted) or emitted[k + 1].role != "refocus":
                items.append(Delay(spec.tau))
        else:
            if p.role == "last_pi":
                detection_index = len(items)
            items.append(p)
    det_perm = perm
    if detection_index is not None:
        T = sequence_unitary(items[detection_index:], d)
        det_perm = _monomial_perm(T.conj().T @ M)

    out = GateSequence(
        items=items,
        dim=d,
        permutation=perm,
        global_phase=float(seq.global_phase + beta),
        variant=variant,
        detection_index=detection_index,
        detection_permutation=det_perm,
    )
    target = np.exp(1j * out.global_phase) * out.permutation_matrix() @ (
        np.exp(-1j * seq.global_phase) * seq.unitary()
    )
    err = np.abs(out.unitary() - target).max()
    if err > 1e-9:
        raise RuntimeError(f"refocused sequence mismatch {err:.3g}")
    return out


def _residual_phases(M):
    """Phase of the nonzero entry in each row of a monomial matrix."""
    perm = _monomial_perm(M)
    z = np.empty(M.shape[0])
    for k, r in enumerate(perm):
        z[r] = np.angle(M[r, k])
    return z


def _cancel_residual_phases(emitted, M, block_start):
    """Shift the phases of two pi pulses of the final block so that M becomes
    a pure permutation times a global phase."""
    d = M.shape[0]
    z_phys = _residual_phases(M)
    if np.abs(np.angle(np.exp(1j * (z_phys - z_phys[0])))).max() < 1e-13:
        return emitted, M

    def effect(idx):
        after = np.eye(d, dtype=complex)
        for p in emitted[idx + 1 :]:
            after = p.matrix(d) @ after
        r = _monomial_perm(after)
        v = np.zeros(d)
        p = emitted[idx]
        v[r[p.mu]] -= 1.0
        v[r[p.nu]] += 1.0
        return v

    candidates = range(block_start, block_start + 5)
    for i, j in itertools.combinations(reversed(candidates), 2):
        A = np.column_stack([effect(i), effect(j), -np.ones(d)])
        if abs(np.linalg.det(A)) < 1e-9:
            continue
        d1, d2, _ = np.linalg.solve(A, -z_phys)
        new = list(emitted)
        new[i] = replace(new[i], phi=new[i].phi + d1)
        new[j] = replace(new[j], phi=new[j].phi + d2)
        # M = (pulse product) @ (logical product)^-1, so swap the pulse product
        M_new = sequence_unitary(new, d) @ sequence_unitary(emitted, d).conj().T @ M
        return new, M_new
    raise RuntimeError("could not cancel residual phases")


# ---------------------------------------------------------------------------
# schedules


@dataclass(frozen=True)
class ScheduleRecord:
    kind: str
    t_start_ns: float
    duration_ns: float
    transition: tuple = None
    theta: float = None
    phi: float = None
    role: str = None

    def to_dict(self):
        out = {"kind": self.kind, "t_start_ns": self.t_start_ns, "duration_ns": self.duration_ns}
        if self.kind == "pulse":
            out.update(
                transition=list(self.transition), theta=self.theta, phi=self.phi, role=self.role
            )
        return out


def to_schedule(seq: GateSequence, t_pi=360.0, spacing="centers", items=None):
    """Assign start times and durations.

    Pulse duration is ``theta / pi * t_pi``. With ``spacing="centers"`` each
    delay between two pulses is shortened by half of each neighbour's duration
    so that the delay value is a center-to-center spacing; ``"edges"`` uses it
    as the free-evolution time.
    """
    if spacing not in ("centers", "edges"):
        raise ValueError(f"spacing must be 'centers' or 'edges', got {spacing!r}")
    items = list(seq.items if items is None else items)
    durations = [it.theta / np.pi * t_pi if isinstance(it, PlanarRotation) else None for it in items]
    records, t = [], 0.0
    for k, it in enumerate(items):
        if isinstance(it, PlanarRotation):
            records.append(
                ScheduleRecord("pulse", t, durations[k], it.transition, it.theta, it.phi, it.role)
            )
            t += durations[k]
        else:
            dur = it.duration
            if spacing == "centers":
                for nb in (k - 1, k + 1):
                    if 0 <= nb < len(items) and durations[nb] is not None:
                        dur -= durations[nb] / 2
                if dur < -1e-9:
                    raise ValueError(
                        f"delay {it.duration} ns too short for center spacing of adjacent pulses"
                    )
                dur = max(dur, 0.0)
            records.append(ScheduleRecord("delay", t, dur))
            t += dur
    return records


def schedule_to_json(records, seq: GateSequence = None):
    doc = {
        "schema": SCHEDULE_SCHEMA,
        "version": SCHEDULE_VERSION,
        "records": [r.to_dict() for r in records],
    }
    if seq is not None:
        doc.update(
            variant=seq.variant,
            permutation=list(seq.permutation),
            global_phase=seq.global_phase,
            detection_index=seq.detection_index,
        )
    return json.dumps(doc, indent=2)


def schedule_from_json(text):
    doc = json.loads(text)
    if doc.get("schema") != SCHEDULE_SCHEMA:
        raise ValueError(f"not a schedule document: schema={doc.get('schema')!r}")
    if doc.get("version") != SCHEDULE_VERSION:
        raise ValueError(f"unsupported schedule version {doc.get('version')}")
    out = []
    for r in doc["records"]:
        if r["kind"] == "pulse":
            out.append(
                ScheduleRecord(
                    "pulse",
                    float(r["t_start_ns"]),
                    float(r["duration_ns"]),
                    tuple(r["transition"]),
                    float(r["theta"]),
                    float(r["phi"]),
                    r.get("role"),
                )
            )
        elif r["kind"] == "delay":
            out.append(ScheduleRecord("delay", float(r["t_start_ns"]), float(r["duration_ns"])))
        else:
            raise ValueError(f"unknown record kind {r['kind']!r}")
    return out

"""Eight-quantity qutrit tomography, pseudo-pure normalization and fidelity.

Matrix elements follow ``rho_{mu nu} = <mu| rho |nu>``. Each quantity ``q``
is turned into a population difference on one transition by a short list of
planar rotations and read out there.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dynamics import DensityMatrix
from .gates import PlanarRotation, sequence_unitary

__all__ = [
    "Q_IDS",
    "PlanEntry",
    "TomographyPlan",
    "TomographyRecord",
    "FidelityReport",
    "PseudoPure",
    "PseudoPureWarning",
    "build_plan",
    "extract_q_ideal",
    "q_from_pulses",
    "pseudo_pure_state",
    "normalize_intensities",
    "q_from_intensity",
    "q_to_matrix",
    "undo_frame",
    "element_map",
    "reconstruct",
    "project_psd",
    "fidelity",
    "fidelity_report",
]

Q_IDS = ("p01", "p12", "re01", "im01", "re12", "im12", "re02", "im02")
# a PSD projection removing more than this weight flags the record
PSD_FLAG = 0.05
# |I12_pur / I12_eq| above this means the pseudo-pure preparation failed
EPS_WARN = 0.2


class PseudoPureWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PlanEntry:
    q_id: str
    conversion_pulses: tuple
    detect_transition: tuple

    def unitary(self):
        return sequence_unitary(self.conversion_pulses, 3)


@dataclass(frozen=True)
class TomographyPlan:
    entries: tuple

    def __post_init__(self):
        ids = [e.q_id for e in self.entries]
        if sorted(ids) != sorted(Q_IDS) or len(ids) != len(Q_IDS):
            raise ValueError(f"plan must contain each of {Q_IDS} exactly once, got {ids}")

    def __getitem__(self, q_id):
        for e in self.entries:
            if e.q_id == q_id:
                return e
        raise KeyError(q_id)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)


def build_plan():
    """Conversion pulses ``(theta, phi, transition)`` for the eight quantities."""
    pi, h = np.pi, np.pi / 2
    R = lambda th, ph, tr: PlanarRotation(tr[0], tr[1], th, ph, role="tomography")
    f01, f12 = (0, 1), (1, 2)
    rows = [
        ("p01", (), f01),
        ("p12", (), f12),
        ("re01", (R(h, -h, f01),), f01),
        ("im01", (R(h, pi, f01),), f01),
        ("re12", (R(h, -h, f12),), f12),
        ("im12", (R(h, pi, f12),), f12),
        ("re02", (R(pi, -h, f12), R(pi, -h, f01), R(h, h, f01)), f01),
        ("im02", (R(pi, -h, f12), R(pi, pi, f01), R(h, 0.0, f01)), f01),
    ]
    return TomographyPlan(tuple(PlanEntry(q, p, d) for q, p, d in rows))


def _mat(rho):
    m = rho.matrix if isinstance(rho, DensityMatrix) else rho
    m = np.asarray(m, dtype=complex)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got {m.shape}")
    return m


def extract_q_ideal(rho, q_id):
    """Algebraic value of quantity ``q_id``."""
    m = _mat(rho)
    if q_id == "p01":
        return float((m[0, 0] - m[1, 1]).real)
    if q_id == "p12":
        return float((m[1, 1] - m[2, 2]).real)
    if q_id[:2] in ("re", "im") and q_id[2:] in ("01", "12", "02"):
        z = m[int(q_id[2]), int(q_id[3])]
        return float(2 * (z.real if q_id[:2] == "re" else z.imag))
    raise KeyError(f"unknown quantity {q_id!r}")


def q_from_pulses(rho, entry: PlanEntry):
    """Population difference on the detect transition after ideal conversion."""
    m = _mat(rho)
    U = entry.unitary()
    out = U @ m @ U.conj().T
    a, b = entry.detect_transition
    return float((out[a, a] - out[b, b]).real)


class PseudoPure(NamedTuple):
    block: np.ndarray
    alpha0: float
    pure: DensityMatrix


def pseudo_pure_state(populations, indices=None):
    """Qutrit block after equalizing levels 1 and 2 and losing their coherence.

    ``alpha0 * |0><0| + (p1 + p2)/2 * 1`` with ``alpha0 = p0 - (p1 + p2)/2``.
    ``indices`` picks the qutrit out of a full population vector.
    """
    p = np.asarray(populations, dtype=float)
    if indices is None:
        if p.shape != (3,):
            raise ValueError("pass qutrit indices together with a full population vector")
        indices = (0, 1, 2)
    p0, p1, p2 = p[list(indices)]
    alpha0 = p0 - (p1 + p2) / 2
    if not alpha0 > 0:
        raise ValueError(f"alpha0 = {alpha0:.3g} <= 0: no pseudo-pure state (inverted or uniform populations)")
    block = alpha0 * np.diag([1.0, 0, 0]) + (p1 + p2) / 2 * np.eye(3)
    pure = DensityMatrix(np.diag([1.0, 0, 0]), scale=alpha0)
    return PseudoPure(block, float(alpha0), pure)


def normalize_intensities(I_pur_01, I_pur_12, I_eq_01, I_eq_12, pop_diffs_eq):
    """Pseudo-pure normalization factor.

    ``alpha = alpha0 + (1 + 3 sgn(eps))/2 |eps| (p1 - p2)`` with
    ``eps = I12_pur / I12_eq`` and ``alpha0 = (I01_pur / I01_eq)(p0 - p1)``.
    """
    if I_eq_01 == 0 or I_eq_12 == 0:
        raise ValueError("equilibrium intensities must be nonzero")
    dp01, dp12 = pop_diffs_eq
    alpha0 = float(np.real(I_pur_01 / I_eq_01)) * dp01
    eps = float(np.real(I_pur_12 / I_eq_12))
    if abs(eps) > EPS_WARN:
        warnings.warn(
            f"pseudo-pure preparation failed: |I12_pur/I12_eq| = {abs(eps):.3f} > {EPS_WARN}",
            PseudoPureWarning,
            stacklevel=2,
        )
    return alpha0 + (1 + 3 * np.sign(eps)) / 2 * abs(eps) * dp12


def q_from_intensity(I, I_eq, dp_eq, alpha):
    """``q = (1/alpha) (I / I_eq) (p_mu - p_nu)_eq``."""
    return float(np.real(I / I_eq)) * dp_eq / alpha


def q_to_matrix(q):
    """Linear inversion of the eight quantities (trace fixed to one)."""
    missing = [k for k in Q_IDS if k not in q]
    if missing:
        raise KeyError(f"missing quantities {missing}")
    a, b = q["p01"], q["p12"]
    r11 = (1 - a + b) / 3
    rho = np.diag([a + r11, r11, r11 - b]).astype(complex)
    for i, j in ((0, 1), (1, 2), (0, 2)):
        z = (q[f"re{i}{j}"] + 1j * q[f"im{i}{j}"]) / 2
        rho[i, j], rho[j, i] = z, np.conj(z)
    return rho


@dataclass(frozen=True)
class TomographyRecord:
    """Measured (or simulated) quantities for one sequence variant.

    ``permutation`` and ``last_pi`` describe the refocusing frame at the
    read-out point: the logical state is
    ``Perm^T T rho_measured T^+ Perm`` with ``T`` the omitted last pi pulse.
    """

    q_values: dict
    raw_intensities: dict = field(default_factory=dict)
    alpha: float = 1.0
    variant: str = "none"
    permutation: tuple = (0, 1, 2)
    last_pi: PlanarRotation = None
    eq_intensities: dict = field(default_factory=dict)
    pur_intensities: dict = field(default_factory=dict)
    flags: tuple = ()

    def __post_init__(self):
        missing = [k for k in Q_IDS if k not in self.q_values]
        if missing:
            raise ValueError(f"record is missing quantities {missing}")
        if self.variant not in ("A", "B", "none"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if sorted(self.permutation) != [0, 1, 2]:
            raise ValueError(f"bad permutation {self.permutation}")

    def to_dict(self):
        cx = lambda z: [float(np.real(z)), float(np.imag(z))]
        lp = self.last_pi
        return {
            "q_values": {k: float(v) for k, v in self.q_values.items()},
            "raw_intensities": {k: cx(v) for k, v in self.raw_intensities.items()},
            "alpha": float(self.alpha),
            "variant": self.variant,
            "permutation": list(self.permutation),
            "last_pi": None if lp is None else {"transition": list(lp.transition), "theta": lp.theta, "phi": lp.phi},
            "eq_intensities": {k: cx(v) for k, v in self.eq_intensities.items()},
            "pur_intensities": {k: cx(v) for k, v in self.pur_intensities.items()},
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d):
        cz = lambda v: complex(v[0], v[1])
        lp = d.get("last_pi")
        if lp is not None:
            lp = PlanarRotation(*lp["transition"], lp["theta"], lp.get("phi", 0.0), role="last_pi")
        return cls(
            q_values={k: float(v) for k, v in d["q_values"].items()},
            raw_intensities={k: cz(v) for k, v in d.get("raw_intensities", {}).items()},
            alpha=float(d.get("alpha", 1.0)),
            variant=d.get("variant", "none"),
            permutation=tuple(d.get("permutation", (0, 1, 2))),
            last_pi=lp,
            eq_intensities={k: cz(v) for k, v in d.get("eq_intensities", {}).items()},
            pur_intensities={k: cz(v) for k, v in d.get("pur_intensities", {}).items()},
            flags=tuple(d.get("flags", ())),
        )


def undo_frame(rho, permutation=(0, 1, 2), last_pi=None):
    """Map a state read out in the refocusing frame back to logical levels."""
    m = _mat(rho)
    if last_pi is not None:
        T = last_pi.matrix(3)
        m = T @ m @ T.conj().T
    P = np.zeros((3, 3))
    for k, p in enumerate(permutation):
        P[p, k] = 1.0
    return P.T @ m @ P


def element_map(permutation=(0, 1, 2), last_pi=None):
    """Logical element ``(a, b)`` read by each measured element ``(i, j)``.

    The frame undo is a monomial map, so every measured upper-triangle
    element lands on exactly one logical element (possibly conjugated).
    """
    T = np.eye(3) if last_pi is None else last_pi.matrix(3)
    P = np.zeros((3, 3))
    for k, p in enumerate(permutation):
        P[p, k] = 1.0
    target = [int(np.argmax(np.abs(col))) for col in (P.T @ T).T]
    out = {}
    for i, j in ((0, 1), (1, 2), (0, 2)):
        a, b = target[i], target[j]
        out[(i, j)] = (min(a, b), max(a, b))
    return out


def reconstruct(records, project=False):
    """Density matrix from one record or from the A/B variants of a sequence.

    Each record is inverted, brought back to the logical frame, and the
    variants are averaged element by element. ``project`` clips negative
    eigenvalues and renormalizes the trace.
    """
    if isinstance(records, TomographyRecord):
        records = [records]
    records = list(records)
    if not records:
        raise ValueError("no records to reconstruct")
    mats = [undo_frame(q_to_matrix(r.q_values), r.permutation, r.last_pi) for r in records]
    rho = np.mean(mats, axis=0)
    rho = 0.5 * (rho + rho.conj().T)
    if project:
        rho, _ = project_psd(rho)
    return DensityMatrix(rho)


def project_psd(rho):
    """Clip negative eigenvalues and renormalize; returns ``(rho, removed_weight)``."""
    m = _mat(rho)
    m = 0.5 * (m + m.conj().T)
    w, V = np.linalg.eigh(m)
    removed = float(-w[w < 0].sum())
    w = np.clip(w, 0, None)
    if w.sum() <= 0:
        raise ValueError("projection left no positive weight")
    w = w / w.sum()
    return (V * w) @ V.conj().T, removed


def _sqrt_psd(m, what):
    w, V = np.linalg.eigh(0.5 * (m + m.conj().T))
    if w.min() < -1e-9:
        raise ValueError(f"{what} is not positive semidefinite (min eigenvalue {w.min():.3g})")
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.conj().T


def fidelity(rho_a, rho_b):
    """Uhlmann fidelity ``Tr sqrt(sqrt(rho_a) rho_b sqrt(rho_a))`` (not squared)."""
    a, b = _mat(rho_a), _mat(rho_b)
    sa = _sqrt_psd(a, "rho_a")
    _sqrt_psd(b, "rho_b")
    w = np.linalg.eigvalsh(sa @ b @ sa)
    # eigenvalues at rounding level would add O(sqrt(eps)) each
    w[w < 64 * np.finfo(float).eps * max(w.max(), 1e-300)] = 0.0
    F = float(np.sqrt(w).sum())
    if abs(np.trace(a) - 1) < 1e-9 and abs(np.trace(b) - 1) < 1e-9:
        F = min(F, 1.0)
    return F


@dataclass(frozen=True)
class FidelityReport:
    F: float
    rho_exp: DensityMatrix
    rho_ideal: DensityMatrix
    deviations: np.ndarray
    removed_weight: float = 0.0
    flagged: bool = False


def fidelity_report(rho_exp, rho_ideal):
    """Project the measured state onto valid states, then compare."""
    exp_m, removed = project_psd(_mat(rho_exp))
    ideal = _mat(rho_ideal)
    return FidelityReport(
        F=fidelity(ideal, exp_m),
        rho_exp=DensityMatrix(exp_m),
        rho_ideal=DensityMatrix(ideal),
        deviations=exp_m - ideal,
        removed_weight=removed,
        flagged=removed > PSD_FLAG,
    )

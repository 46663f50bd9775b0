"""Electro-nuclear spin Hamiltonian of a lanthanide qudit.

The Hamiltonian is built on the product basis ``|m_S> (x) |m_I>`` with ``m``
descending, diagonalized, and its eigenstates labelled by their dominant
overlap with product states quantized along the static field.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .constants import K_B_OVER_H, MU_B_OVER_H, MU_N_OVER_H

__all__ = [
    "SpinSystemParams",
    "StaticField",
    "EigenSystem",
    "QutritSubspace",
    "LabelingError",
    "NumericalError",
    "spin_matrices",
    "spin_operators",
    "build_static_hamiltonian",
    "eigensystem",
    "diagonalize",
    "select_qutrit",
    "magnetization_operator",
    "boltzmann_populations",
    "DEFAULT_QUTRIT_LABELS",
]

DEFAULT_QUTRIT_LABELS = ((0.5, 0.5), (0.5, -0.5), (0.5, -1.5))
# overlaps within this margin of 1/2 count as ambiguous (exact 50/50 mixing)
_LABEL_MARGIN = 1e-6


class LabelingError(ValueError):
    """Eigenstates cannot be matched to product-state labels."""

    def __init__(self, message, overlaps=None):
        super().__init__(message)
        self.overlaps = overlaps


class NumericalError(RuntimeError):
    pass


def _check_spin(j, name):
    if j < 0.5 or abs(2 * j - round(2 * j)) > 1e-12:
        raise ValueError(f"{name} must be a positive multiple of 1/2, got {j}")


@dataclass(frozen=True)
class SpinSystemParams:
    """Coefficients of the spin Hamiltonian (MHz, dimensionless g-factors)."""

    A_par: float = -883.0
    A_perp: float = -628.0
    p_quad: float = -66.0
    g_x: float = 2.9
    g_y: float = 2.9
    g_z: float = 4.3
    g_I: float = -0.2592
    S: float = 0.5
    I: float = 2.5
    mu_B_over_h: float = MU_B_OVER_H
    mu_N_over_h: float = MU_N_OVER_H

    def __post_init__(self):
        _check_spin(self.S, "S")
        _check_spin(self.I, "I")

    @classmethod
    def axial(cls, g_perp=2.9, g_par=4.3, **kwargs):
        return cls(g_x=g_perp, g_y=g_perp, g_z=g_par, **kwargs)

    @property
    def dim(self):
        return int(round((2 * self.S + 1) * (2 * self.I + 1)))

    @property
    def g_tensor(self):
        return np.diag([self.g_x, self.g_y, self.g_z])

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown spin parameters: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class StaticField:
    """Static field in the molecular frame, tesla."""

    B_vec: tuple = (0.2, 0.0, 0.0)

    def __post_init__(self):
        vec = tuple(float(b) for b in self.B_vec)
        if len(vec) != 3 or not np.all(np.isfinite(vec)):
            raise ValueError(f"B_vec must be three finite components, got {self.B_vec}")
        object.__setattr__(self, "B_vec", vec)

    @property
    def magnitude(self):
        return float(np.linalg.norm(self.B_vec))

    @property
    def axis(self):
        """Unit vector along the field; ``z`` when the field vanishes."""
        norm = self.magnitude
        if norm == 0.0:
            return np.array([0.0, 0.0, 1.0])
        return np.asarray(self.B_vec) / norm


def spin_matrices(j):
    """Angular momentum matrices ``(Jx, Jy, Jz)`` for spin ``j``, hbar = 1, m descending."""
    _check_spin(j, "j")
    m = np.arange(j, -j - 1, -1)
    dim = len(m)
    jp = np.zeros((dim, dim))
    for k in range(1, dim):
        jp[k - 1, k] = np.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
    jx = (jp + jp.T) / 2
    jy = (jp - jp.T) / 2j
    jz = np.diag(m).astype(complex)
    return jx.astype(complex), jy, jz


def spin_operators(params: SpinSystemParams):
    """Electronic and nuclear spin operators embedded in the product space.

    Returns two lists ``[Sx, Sy, Sz]`` and ``[Ix, Iy, Iz]``.
    """
    s_ops = spin_matrices(params.S)
    i_ops = spin_matrices(params.I)
    eye_s = np.eye(s_ops[0].shape[0])
    eye_i = np.eye(i_ops[0].shape[0])
    S = [np.kron(op, eye_i) for op in s_ops]
    I = [np.kron(eye_s, op) for op in i_ops]
    return S, I


def _assert_hermitian(H, what="operator"):
    scale = max(np.abs(H).max(), 1.0)
    if np.abs(H - H.conj().T).max() > 1e-12 * scale:
        raise AssertionError(f"{what} is not Hermitian")


def build_static_hamiltonian(params: SpinSystemParams, field: StaticField):
    """Static spin Hamiltonian in MHz on the product basis.

    ``A_par Sz Iz + A_perp (Sx Ix + Sy Iy) + p Iz^2
    + muB/h S.g.B - muN/h g_I I.B``
    """
    (Sx, Sy, Sz), (Ix, Iy, Iz) = spin_operators(params)
    B = np.asarray(field.B_vec, dtype=float)
    gB = params.g_tensor @ B
    H = (
        params.A_par * Sz @ Iz
        + params.A_perp * (Sx @ Ix + Sy @ Iy)
        + params.p_quad * Iz @ Iz
        + params.mu_B_over_h * (gB[0] * Sx + gB[1] * Sy + gB[2] * Sz)
        - params.mu_N_over_h * params.g_I * (B[0] * Ix + B[1] * Iy + B[2] * Iz)
    )
    _assert_hermitian(H, "static Hamiltonian")
    return H


@dataclass(frozen=True)
class EigenSystem:
    """Eigen-decomposition of a static Hamiltonian.

    ``energies`` are ascending and shifted so the ground state sits at 0 MHz;
    ``offset`` holds the subtracted ground energy. Columns of ``states`` are the
    eigenvectors in the product basis.
    """

    energies: np.ndarray
    states: np.ndarray
    labels: tuple = None
    label_overlaps: np.ndarray = None
    offset: float = 0.0
    product_overlaps: np.ndarray = field(default=None, repr=False)

    @property
    def dim(self):
        return len(self.energies)

    def to_eigenbasis(self, op):
        return self.states.conj().T @ op @ self.states

    def hamiltonian(self):
        E = self.energies + self.offset
        return (self.states * E) @ self.states.conj().T


def _fix_phases(V):
    idx = np.argmax(np.abs(V), axis=0)
    ph = V[idx, np.arange(V.shape[1])]
    return V * (np.abs(ph) / ph)


def _product_basis(S, I, axis):
    """Product states ``|m_S, m_I>`` quantized along ``axis`` (m descending)."""
    vecs, labels = [], []
    bases = []
    for j in (S, I):
        jx, jy, jz = spin_matrices(j)
        proj = axis[0] * jx + axis[1] * jy + axis[2] * jz
        w, v = np.linalg.eigh(proj)
        order = np.argsort(-w)
        bases.append((np.round(w[order] * 2) / 2, v[:, order]))
    (ms, vs), (mi, vi) = bases
    for a in range(len(ms)):
        for b in range(len(mi)):
            vecs.append(np.kron(vs[:, a], vi[:, b]))
            labels.append((float(ms[a]), float(mi[b])))
    return np.array(vecs).T, labels


def eigensystem(H, quantum_numbers=None, axis=None):
    """Diagonalize a Hermitian matrix.

    Eigenvalues are ascending; each eigenvector has its largest-magnitude
    component real and positive. When ``quantum_numbers=(S, I)`` is given the
    states are labelled by maximum-total-overlap assignment onto product states
    quantized along ``axis`` (default ``z``).
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    _assert_hermitian(H, "input")
    try:
        E, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigensolver failed: norm={np.linalg.norm(H):.3g}, "
            f"finite={np.all(np.isfinite(H))}"
        ) from exc
    V = _fix_phases(V)
    offset = float(E[0])
    labels = overlaps = prod = None
    if quantum_numbers is not None:
        S, I = quantum_numbers
        ax = np.array([0.0, 0.0, 1.0]) if axis is None else np.asarray(axis, float)
        ax = ax / np.linalg.norm(ax)
        P, plabels = _product_basis(S, I, ax)
        prod = np.abs(P.conj().T @ V) ** 2  # rows: product states, cols: eigenstates
        rows, cols = linear_sum_assignment(-prod)
        assign = np.empty(len(E), dtype=int)
        assign[cols] = rows
        labels = tuple(plabels[r] for r in assign)
        overlaps = prod[assign, np.arange(len(E))]
    return EigenSystem(
        energies=E - offset,
        states=V,
        labels=labels,
        label_overlaps=overlaps,
        offset=offset,
        product_overlaps=prod,
    )


def diagonalize(params: SpinSystemParams, field: StaticField):
    """Build, diagonalize and label the static Hamiltonian."""
    H = build_static_hamiltonian(params, field)
    return eigensystem(H, quantum_numbers=(params.S, params.I), axis=field.axis)


@dataclass(frozen=True)
class QutritSubspace:
    indices: tuple
    f_01: float
    f_12: float
    labels: tuple = None

    @property
    def transitions(self):
        return {(0, 1): self.f_01, (1, 2): self.f_12}


def select_qutrit(eig: EigenSystem, target_labels: Sequence = DEFAULT_QUTRIT_LABELS):
    """Pick three labelled eigenstates; indices are returned in ascending energy order."""
    if eig.labels is None:
        raise LabelingError("eigensystem carries no labels")
    found = []
    for lab in target_labels:
        lab = (float(lab[0]), float(lab[1]))
        hits = [k for k, l in enumerate(eig.labels) if l == lab]
        if not hits or eig.label_overlaps[hits[0]] <= 0.5 + _LABEL_MARGIN:
            table = {
                eig.labels[k]: float(eig.label_overlaps[k]) for k in range(eig.dim)
            }
            raise LabelingError(
                f"state {lab} is not resolvable (overlap <= 0.5)", overlaps=table
            )
        found.append(hits[0])
    order = np.argsort(found)
    idx = tuple(int(found[k]) for k in order)
    labels = tuple(eig.labels[k] for k in idx)
    E = eig.energies
    return QutritSubspace(
        indices=idx,
        f_01=float(E[idx[1]] - E[idx[0]]),
        f_12=float(E[idx[2]] - E[idx[1]]),
        labels=labels,
    )


def magnetization_operator(params: SpinSystemParams, axis="z"):
    """Magnetization along a molecular axis, MHz/T, on the product basis."""
    k = "xyz".index(axis) if axis in ("x", "y", "z") else None
    if k is None:
        raise ValueError(f"axis must be one of x, y, z, got {axis!r}")
    S, I = spin_operators(params)
    g = (params.g_x, params.g_y, params.g_z)[k]
    M = params.mu_B_over_h * g * S[k] - params.mu_N_over_h * params.g_I * I[k]
    _assert_hermitian(M, "magnetization operator")
    return M


def boltzmann_populations(eig: EigenSystem, T):
    """Thermal populations at temperature ``T`` (kelvin)."""
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T}")
    x = -(eig.energies - eig.energies.min()) / (K_B_OVER_H * T)
    p = np.exp(x - x.max())
    return p / p.sum()

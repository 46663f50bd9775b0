"""Pulse-level simulator and sequence compiler for a hyperfine spin qutrit."""

__version__ = "0.1.0"

from .spin_model import (  # noqa: E402
    SpinSystemParams,
    StaticField,
    boltzmann_populations,
    diagonalize,
    select_qutrit,
)
from .gates import (  # noqa: E402
    GateSequence,
    PlanarRotation,
    RefocusSpec,
    decompose_unitary,
    insert_refocusing,
    qft_unitary,
)
from .dynamics import PropagationContext, propagate_lab, propagate_rwa  # noqa: E402
from .ensemble import EnsembleSpec, ensemble_experiment, hahn_echo, sample_ensemble  # noqa: E402
from .tomography import build_plan, fidelity, reconstruct  # noqa: E402

__all__ = [
    "SpinSystemParams",
    "StaticField",
    "boltzmann_populations",
    "diagonalize",
    "select_qutrit",
    "GateSequence",
    "PlanarRotation",
    "RefocusSpec",
    "decompose_unitary",
    "insert_refocusing",
    "qft_unitary",
    "PropagationContext",
    "propagate_lab",
    "propagate_rwa",
    "EnsembleSpec",
    "ensemble_experiment",
    "hahn_echo",
    "sample_ensemble",
    "build_plan",
    "fidelity",
    "reconstruct",
]

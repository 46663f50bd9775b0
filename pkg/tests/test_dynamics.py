import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_state
from qudit_forge.dynamics import (
    DephasingModel,
    PropagationContext,
    PulseSpec,
    Segment,
    apply_dephasing,
    apply_ideal,
    calibrate_amplitude,
    embed_qutrit,
    free_propagator,
    lower_sequence,
    propagate_rwa,
    pulse_propagator_rwa,
    qutrit_block,
)
from qudit_forge.gates import Delay, GateSequence, PlanarRotation
from qudit_forge.tomography import fidelity


@pytest.fixture(scope="module")
def ctx():
    return PropagationContext.build()


def test_calibrated_amplitude_scales_inversely(ctx):
    a = calibrate_amplitude(ctx, (0, 1), 360.0)
    b = calibrate_amplitude(ctx, (0, 1), 720.0)
    assert np.isclose(a, 2 * b)
    with pytest.raises(ValueError):
        calibrate_amplitude(ctx, (0, 1), 0.0)


def test_pulse_spec_validation():
    with pytest.raises(ValueError):
        PulseSpec(300.0, 0.0, -1.0)
    with pytest.raises(ValueError):
        PulseSpec(300.0, 0.0, 10.0, amplitude=-1.0)
    with pytest.raises(ValueError):
        PulseSpec(300.0, 0.0, 10.0, shape="gaussian")


@pytest.mark.parametrize("tr", [(0, 1), (1, 2)])
def test_rwa_pi_pulse_inverts_populations(ctx, tr):
    rho = np.zeros((3, 3), complex)
    rho[tr[0], tr[0]] = 1
    out = qutrit_block(propagate_rwa(rho, GateSequence([PlanarRotation(*tr, np.pi, 0.2)]), ctx, crosstalk=False), ctx)
    assert out[tr[1], tr[1]].real > 0.9999


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), tr=st.sampled_from([(0, 1), (1, 2)]),
       theta=st.floats(0.1, 2 * np.pi), phi=st.floats(-np.pi, np.pi))
def test_rwa_matches_ideal_rotation(seed, tr, theta, phi, ctx):
    rho3 = random_state(np.random.default_rng(seed))
    seq = GateSequence([PlanarRotation(*tr, theta, phi)])
    out = qutrit_block(propagate_rwa(rho3, seq, ctx, crosstalk=False), ctx)
    assert fidelity(out, apply_ideal(rho3, seq)) > 0.9999


def test_rwa_propagator_unitary(ctx):
    seg = lower_sequence(GateSequence([PlanarRotation(1, 2, np.pi / 2, 0.3)]), ctx)[0]
    U = pulse_propagator_rwa(ctx, seg)
    assert np.allclose(U @ U.conj().T, np.eye(ctx.dim), atol=1e-12)


def test_free_propagator_identity_on_reference(ctx):
    assert np.allclose(free_propagator(ctx, 1234.0), np.eye(ctx.dim))


def test_lowering_places_segments_in_order(ctx):
    seq = GateSequence([PlanarRotation(0, 1, np.pi), Delay(500.0), PlanarRotation(1, 2, np.pi / 2)])
    segs = lower_sequence(seq, ctx, t_pi=360.0)
    ends = [s.t_start + s.duration for s in segs]
    assert all(b.t_start >= a - 1e-9 for a, b in zip(ends, segs[1:]))
    pulses = [s for s in segs if s.pulse is not None]
    assert np.isclose(pulses[0].duration, 360.0) and np.isclose(pulses[1].duration, 180.0)


def test_embed_and_block_are_inverse(ctx, rng):
    r = random_state(rng)
    assert np.allclose(qutrit_block(embed_qutrit(r, ctx), ctx), r)


def test_dephasing_composes_over_intervals():
    m = DephasingModel({(0, 1): 1.0}, "gaussian")
    rho = np.full((3, 3), 0.5, complex)
    a = apply_dephasing(apply_dephasing(rho, 300.0, m), 400.0, m, elapsed_before=300.0)
    b = apply_dephasing(rho, 700.0, m)
    assert np.allclose(a, b)
    assert np.isclose(b[0, 1], 0.5 * np.exp(-0.49))
    assert b[0, 0] == 0.5 and b[1, 2] == 0.5


def test_dephasing_off_is_identity():
    rho = np.full((3, 3), 0.5, complex)
    assert np.allclose(apply_dephasing(rho, 1e5, DephasingModel({(0, 1): 1.0}, "off")), rho)
    with pytest.raises(ValueError):
        DephasingModel({(0, 1): -1.0}, "gaussian")


def test_evolve_preserves_trace_and_hermiticity(ctx, rng):
    r = embed_qutrit(random_state(rng), ctx)
    seq = GateSequence([PlanarRotation(0, 1, 1.0, 0.3), Delay(800.0), PlanarRotation(1, 2, 2.0, -0.4)])
    out = propagate_rwa(r, seq, ctx)
    assert np.isclose(np.trace(out), 1.0)
    assert np.allclose(out, out.conj().T)


def test_shape_mismatch_rejected(ctx):
    from qudit_forge.dynamics import evolve

    with pytest.raises(ValueError):
        evolve(np.eye(4) / 4, [Segment(0.0, 10.0)], ctx)

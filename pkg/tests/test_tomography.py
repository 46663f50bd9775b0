import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_state
from qudit_forge.gates import PlanarRotation
from qudit_forge.tomography import (
    Q_IDS,
    PseudoPureWarning,
    TomographyRecord,
    build_plan,
    element_map,
    extract_q_ideal,
    fidelity,
    fidelity_report,
    normalize_intensities,
    project_psd,
    pseudo_pure_state,
    q_from_intensity,
    q_from_pulses,
    q_to_matrix,
    reconstruct,
    undo_frame,
)

seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=100, deadline=None)
@given(seed=seeds)
def test_algebraic_round_trip(seed):
    rho = random_state(np.random.default_rng(seed))
    q = {k: extract_q_ideal(rho, k) for k in Q_IDS}
    assert np.abs(q_to_matrix(q) - rho).max() < 1e-12


@settings(max_examples=100, deadline=None)
@given(seed=seeds)
def test_pulse_path_matches_algebra(seed):
    rho = random_state(np.random.default_rng(seed))
    for entry in build_plan():
        assert abs(q_from_pulses(rho, entry) - extract_q_ideal(rho, entry.q_id)) < 1e-12


def test_plan_covers_all_quantities():
    plan = build_plan()
    assert [e.q_id for e in plan] == list(Q_IDS)
    assert len(plan) == 8


def test_normalization_branches():
    dp = (7.7e-4, 8.3e-4)
    a0 = 0.5 * dp[0]
    assert normalize_intensities(0.5, 0.0, 1.0, 1.0, dp) == pytest.approx(a0, abs=0)
    assert normalize_intensities(0.5, 0.1, 1.0, 1.0, dp) == pytest.approx(a0 + 2 * 0.1 * dp[1], rel=1e-15)
    assert normalize_intensities(0.5, -0.1, 1.0, 1.0, dp) == pytest.approx(a0 - 0.1 * dp[1], rel=1e-15)
    with pytest.warns(PseudoPureWarning):
        normalize_intensities(0.5, 0.3, 1.0, 1.0, dp)
    with pytest.raises(ValueError):
        normalize_intensities(0.5, 0.1, 0.0, 1.0, dp)


def test_q_from_intensity_formula():
    assert q_from_intensity(0.25 + 0.1j, 0.5, 8e-4, 2e-4) == pytest.approx(0.5 * 8e-4 / 2e-4)


def test_pseudo_pure_block():
    pp = pseudo_pure_state([0.5, 0.3, 0.2])
    assert np.isclose(pp.alpha0, 0.25)
    assert np.allclose(pp.block, np.diag([0.5, 0.25, 0.25]))
    with pytest.raises(ValueError):
        pseudo_pure_state([0.2, 0.3, 0.5])


@settings(max_examples=50, deadline=None)
@given(seed=seeds, perm=st.permutations([0, 1, 2]), tr=st.sampled_from([(0, 1), (1, 2)]),
       phi=st.floats(-np.pi, np.pi))
def test_undo_frame_inverts_frame(seed, perm, tr, phi):
    rho = random_state(np.random.default_rng(seed))
    P = np.zeros((3, 3))
    for k, p in enumerate(perm):
        P[p, k] = 1
    T = PlanarRotation(*tr, np.pi, phi)
    measured = T.matrix(3).conj().T @ P @ rho @ P.T @ T.matrix(3)
    assert np.allclose(undo_frame(measured, perm, T), rho)
    emap = element_map(perm, T)
    for (i, j), (a, b) in emap.items():
        assert np.isclose(abs(measured[i, j]), abs(rho[a, b]))


def test_reconstruct_averages_variants(rng):
    a, b = random_state(rng), random_state(rng)
    ra = TomographyRecord({k: extract_q_ideal(a, k) for k in Q_IDS}, variant="A")
    rb = TomographyRecord({k: extract_q_ideal(b, k) for k in Q_IDS}, variant="B")
    assert np.allclose(reconstruct([ra, rb]).matrix, (a + b) / 2)
    with pytest.raises(ValueError):
        reconstruct([])


def test_record_round_trip(rng):
    rho = random_state(rng)
    rec = TomographyRecord(
        {k: extract_q_ideal(rho, k) for k in Q_IDS},
        raw_intensities={"p01": 1 + 2j},
        variant="B",
        permutation=(0, 2, 1),
        last_pi=PlanarRotation(1, 2, np.pi, 0.5, role="last_pi"),
    )
    back = TomographyRecord.from_dict(rec.to_dict())
    assert back.q_values == rec.q_values and back.permutation == rec.permutation
    assert np.allclose(back.last_pi.matrix(3), rec.last_pi.matrix(3))
    with pytest.raises(ValueError):
        TomographyRecord({"p01": 0.0})


def test_fidelity_properties(rng):
    a, b = random_state(rng), random_state(rng)
    assert fidelity(a, a) == pytest.approx(1.0, abs=1e-12)
    assert fidelity(a, b) == pytest.approx(fidelity(b, a), abs=1e-10)
    assert 0 <= fidelity(a, b) <= 1
    v = np.array([1, 0, 0.0])
    w = np.array([0, 1, 0.0])
    assert fidelity(np.outer(v, v), np.outer(w, w)) == pytest.approx(0.0, abs=1e-12)


def test_psd_projection_and_flag():
    bad = np.diag([0.7, 0.4, -0.1]).astype(complex)
    m, removed = project_psd(bad)
    assert np.isclose(removed, 0.1)
    assert np.all(np.linalg.eigvalsh(m) >= -1e-15)
    assert np.isclose(np.trace(m), 1)
    rep = fidelity_report(bad, np.diag([1, 0, 0.0]))
    assert rep.flagged
    assert not fidelity_report(np.diag([0.9, 0.1, 0.0]), np.diag([1, 0, 0.0])).flagged

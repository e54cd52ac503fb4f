import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qredist.discern import (
    HypothesisError,
    build_pgm,
    check_hayashi,
    coherify,
    pgm_miss_prob,
    random_hayashi_pair,
    random_projector,
)
from qredist.qcore import haar_unitary


def ket(d, i):
    v = np.zeros(d, complex)
    v[i] = 1
    return v


def proj(v):
    return np.outer(v, v.conj())


def test_pgm_single_state():
    rng = np.random.default_rng(0)
    p = random_projector(4, 2, rng)
    pgm = build_pgm([p / 2])
    np.testing.assert_allclose(pgm.elements[0], p, atol=1e-12)
    assert pgm_miss_prob(pgm, 0, p / 2) == pytest.approx(0.0, abs=1e-12)


def test_pgm_orthogonal_pair():
    a, b = proj(ket(3, 0)), proj(ket(3, 1))
    pgm = build_pgm([a, b])
    np.testing.assert_allclose(pgm.elements[0], a, atol=1e-12)
    np.testing.assert_allclose(pgm.elements[1], b, atol=1e-12)
    assert pgm_miss_prob(pgm, 0, a) == pytest.approx(0.0, abs=1e-12)
    assert pgm_miss_prob(pgm, 1, b) == pytest.approx(0.0, abs=1e-12)
    assert pgm.completeness_residual() < 1e-10


def test_pgm_identical_pair():
    rng = np.random.default_rng(1)
    v = haar_unitary(4, rng)[:, 0]
    pgm = build_pgm([proj(v), proj(v)])
    np.testing.assert_allclose(pgm.elements[0], proj(v) / 2, atol=1e-12)
    assert np.mean([pgm_miss_prob(pgm, k, proj(v)) for k in range(2)]) == pytest.approx(0.5)


def test_pgm_miss_matches_direct_trace():
    rng = np.random.default_rng(2)
    d = 6
    states = [proj(haar_unitary(d, rng)[:, 0]) for _ in range(3)]
    pgm = build_pgm(states)
    # independent path: Lambda^{-1/2} via full eigendecomposition on the support
    total = sum(states)
    w, v = np.linalg.eigh(total)
    inv = np.where(w > 1e-9, 1 / np.sqrt(np.abs(w)), 0.0)
    r = (v * inv) @ v.conj().T
    for k, s in enumerate(states):
        want = 1 - np.real(np.trace(r @ s @ r @ s))
        assert pgm_miss_prob(pgm, k, s) == pytest.approx(want, abs=1e-10)
    assert pgm.completeness_residual() < 1e-10


def test_pgm_index_error():
    pgm = build_pgm([proj(ket(2, 0))])
    with pytest.raises(IndexError):
        pgm_miss_prob(pgm, 1, proj(ket(2, 0)))


def test_hayashi_identity_and_rank_one():
    assert check_hayashi(np.eye(3), np.eye(3)) == pytest.approx(0.0, abs=1e-12)
    p = proj(ket(3, 1))
    assert check_hayashi(p, p) >= -1e-12


def test_hayashi_hypothesis_violation():
    with pytest.raises(HypothesisError) as info:
        check_hayashi(np.eye(2), 0.5 * np.eye(2))
    assert info.value.eigenvalue == pytest.approx(-0.5)


def test_hayashi_random_audit():
    rng = np.random.default_rng(3)
    worst = min(check_hayashi(*random_hayashi_pair(int(rng.integers(1, 17)), rng)) for _ in range(1000))
    assert worst >= -1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_hayashi_property(dim, seed):
    assert check_hayashi(*random_hayashi_pair(dim, np.random.default_rng(seed))) >= -1e-9


def test_coherify_orthogonal_supports():
    # D = 4, E = 1: psi = |0>, U_k maps |0> to |k>
    d, kappa = 4, 4
    psi = ket(d, 0)
    us = [np.roll(np.eye(d), k, axis=0) for k in range(kappa)]
    targets = [u @ psi for u in us]
    pgm = build_pgm([proj(t) for t in targets])
    res = coherify(psi, us, targets, pgm)
    assert res.P == pytest.approx(0.0, abs=1e-12)
    assert res.F == pytest.approx(1.0)
    assert res.mean_overlap == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(np.abs(res.phases), 1)


def test_coherify_single_hypothesis():
    rng = np.random.default_rng(4)
    d, de = 4, 2
    psi = haar_unitary(d * de, rng)[:, 0]
    u = haar_unitary(d, rng)
    target = np.kron(u, np.eye(de)) @ psi
    rho_d = np.einsum("ie,je->ij", target.reshape(d, de), target.reshape(d, de).conj())
    pgm = build_pgm([rho_d])
    res = coherify(psi, [u], [target], pgm)
    sqrt_l = u.conj().T @ pgm.elements[0]
    assert np.allclose(res.isometry, res.phases[0] * sqrt_l)
    assert res.ok


def test_coherify_random_instance():
    rng = np.random.default_rng(5)
    d, de, kappa = 8, 2, 4
    psi = haar_unitary(d * de, rng)[:, 0]
    us = [haar_unitary(d, rng) for _ in range(kappa)]
    ideal = [np.kron(u, np.eye(de)) @ psi for u in us]
    noisy = []
    for t in ideal:
        n = t + 0.05 * (rng.standard_normal(t.shape) + 1j * rng.standard_normal(t.shape))
        noisy.append(n / np.linalg.norm(n))
    mats = [np.einsum("ie,je->ij", t.reshape(d, de), t.reshape(d, de).conj()) for t in ideal]
    pgm = build_pgm(mats)
    res = coherify(psi, us, noisy, pgm)
    assert np.all(res.overlaps >= 0)
    assert res.mean_overlap >= res.bound - 1e-9
    assert res.chain["overlap_ge_overlap_sq"]
    assert res.chain["overlap_sq_ge_step"]
    assert res.chain["convexity"]


def test_coherify_kappa_mismatch():
    pgm = build_pgm([proj(ket(2, 0))])
    with pytest.raises(ValueError):
        coherify(ket(2, 0), [np.eye(2), np.eye(2)], [ket(2, 0), ket(2, 0)], pgm)

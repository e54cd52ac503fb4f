import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qredist.qcore import (
    DensityOperator,
    IsometryMap,
    PureState,
    StateError,
    SystemLabel,
    basis_state,
    fidelity,
    haar_unitary,
    max_entangled,
    max_overlap_isometry,
    maximally_mixed,
    partial_trace,
    purify,
    random_density,
    random_isometry,
    random_pure_state,
    reorder,
    save_state,
    load_state,
    schatten,
    state_from_json,
    state_to_json,
    tensor,
    trace_distance,
)
from qredist.entropy import entropy

A, B, C, E = (SystemLabel(n, 2) for n in "ABCE")


def bell(a=A, b=B):
    return max_entangled(a, b)


def test_labels_validated():
    with pytest.raises(StateError):
        SystemLabel("X", 0)
    with pytest.raises(StateError):
        PureState([A, A], np.eye(4)[0])


def test_pure_state_rejects_unnormalized():
    with pytest.raises(StateError):
        PureState([A], [1.0, 1.0])


def test_density_rejects_non_psd():
    with pytest.raises(StateError):
        DensityOperator([A], np.diag([1.2, -0.2]))


def test_tensor_basis():
    out = tensor(basis_state([A], [0]), basis_state([B], [1]))
    np.testing.assert_allclose(out.amplitudes, [0, 1, 0, 0])
    assert out.names == ("A", "B")


def test_tensor_maximally_mixed():
    out = tensor(maximally_mixed([A]), maximally_mixed([B]))
    np.testing.assert_allclose(out.matrix, np.eye(4) / 4)


def test_tensor_label_collision():
    with pytest.raises(StateError):
        tensor(maximally_mixed([A]), maximally_mixed([A]))


def test_tensor_spectrum_is_products():
    rng = np.random.default_rng(11)
    r = random_density([A], rng)
    s = random_density([SystemLabel("B", 3)], rng)
    got = np.sort(np.linalg.eigvalsh(tensor(r, s).matrix))
    want = np.sort(np.outer(np.linalg.eigvalsh(r.matrix), np.linalg.eigvalsh(s.matrix)).ravel())
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_partial_trace_bell():
    np.testing.assert_allclose(partial_trace(bell(), ["A"]).matrix, np.eye(2) / 2, atol=1e-14)


def test_partial_trace_product():
    rng = np.random.default_rng(2)
    r, s = random_density([A], rng), random_density([B], rng)
    np.testing.assert_allclose(partial_trace(tensor(r, s), ["A"]).matrix, r.matrix, atol=1e-13)


def test_partial_trace_unknown_label():
    with pytest.raises(StateError):
        partial_trace(bell(), ["Z"])


def test_partial_trace_pure_tripartite_symmetry():
    psi = random_pure_state([A, B, C], np.random.default_rng(3))
    assert entropy(partial_trace(psi, ["A", "B"])) == pytest.approx(entropy(partial_trace(psi, ["C"])), abs=1e-10)


def test_partial_trace_keeps_state_order():
    rng = np.random.default_rng(4)
    r = random_density([A, SystemLabel("B", 3), C], rng)
    m1 = partial_trace(r, ["C", "A"]).matrix
    m2 = partial_trace(reorder(r, ["A", "C", "B"]), ["A", "C"]).matrix
    np.testing.assert_allclose(m1, m2, atol=1e-13)


def test_reorder_roundtrip():
    psi = random_pure_state([A, SystemLabel("B", 3), C], np.random.default_rng(5))
    back = reorder(reorder(psi, ["C", "A", "B"]), ["A", "B", "C"])
    np.testing.assert_allclose(back.amplitudes, psi.amplitudes)


def test_purify_maximally_mixed_is_bell_like():
    p = purify(maximally_mixed([A]), SystemLabel("R", 2))
    np.testing.assert_allclose(partial_trace(p, ["R"]).matrix, np.eye(2) / 2, atol=1e-13)
    assert entropy(partial_trace(p, ["A"])) == pytest.approx(1.0)


def test_purify_pure_leaves_reference_unentangled():
    rho = random_pure_state([A], np.random.default_rng(6)).density()
    p = purify(rho, SystemLabel("R", 2))
    assert partial_trace(p, ["R"]).purity() == pytest.approx(1.0)


def test_purify_rank3_roundtrip():
    rho = random_density([SystemLabel("X", 4)], np.random.default_rng(7), rank=3)
    p = purify(rho, SystemLabel("R", 3))
    assert np.max(np.abs(partial_trace(p, ["X"]).matrix - rho.matrix)) < 1e-12


def test_purify_reference_too_small():
    rho = random_density([SystemLabel("X", 4)], np.random.default_rng(8), rank=3)
    with pytest.raises(StateError):
        purify(rho, SystemLabel("R", 2))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 16), st.integers(0, 2**32 - 1))
def test_purify_roundtrip_property(d, seed):
    rho = random_density([SystemLabel("X", d)], np.random.default_rng(seed))
    p = purify(rho, SystemLabel("R", d))
    assert np.max(np.abs(partial_trace(p, ["X"]).matrix - rho.matrix)) < 1e-10


def test_fidelity_examples():
    rho = random_density([A], np.random.default_rng(9))
    assert fidelity(rho, rho) == pytest.approx(1.0, abs=1e-9)
    assert fidelity(basis_state([A], [0]), basis_state([A], [1])) == 0.0
    # commuting closed form (sqrt(0.375) + sqrt(0.125))^2
    f = fidelity(maximally_mixed([A]), DensityOperator([A], np.diag([0.75, 0.25])))
    assert f == pytest.approx(0.9330127018922192, abs=1e-12)


def test_fidelity_pure_mixed_formula():
    rng = np.random.default_rng(10)
    phi, sigma = random_pure_state([A, B], rng), random_density([A, B], rng)
    want = np.real(phi.amplitudes.conj() @ sigma.matrix @ phi.amplitudes)
    assert fidelity(phi, sigma) == pytest.approx(want)
    assert fidelity(phi.density(), sigma) == pytest.approx(want, abs=1e-9)


def test_fidelity_dimension_mismatch():
    with pytest.raises(StateError):
        fidelity(maximally_mixed([A]), maximally_mixed([SystemLabel("A", 3)]))


def test_trace_distance_examples():
    rho = random_density([A], np.random.default_rng(12))
    assert trace_distance(rho, rho) == pytest.approx(0.0, abs=1e-12)
    assert trace_distance(basis_state([A], [0]), basis_state([A], [1])) == pytest.approx(2.0)


def test_fidelity_trace_distance_relations():
    rng = np.random.default_rng(13)
    for _ in range(1000):
        d = int(rng.integers(2, 5))
        lab = [SystemLabel("X", d)]
        r, s = random_density(lab, rng), random_density(lab, rng)
        f, t = fidelity(r, s), trace_distance(r, s)
        assert f >= 1 - t - 1e-10
        assert t <= 2 * np.sqrt(max(0.0, 1 - f)) + 1e-10


def test_schatten_examples():
    pi = maximally_mixed([SystemLabel("X", 4)])
    assert [schatten(pi, w) for w in ("rank0", "two_norm_sq", "inf_norm")] == pytest.approx([4, 0.25, 0.25])
    pure = random_pure_state([A], np.random.default_rng(0))
    assert [schatten(pure, w) for w in ("rank0", "two_norm_sq", "inf_norm")] == pytest.approx([1, 1, 1])
    m = np.diag([0.5, 0.3, 0.2, 0.0])
    assert [schatten(m, w) for w in ("rank0", "two_norm_sq", "inf_norm")] == pytest.approx([3, 0.38, 0.5])
    with pytest.raises(ValueError):
        schatten(m, "nuclear")


def test_haar_unitarity_and_dim1():
    rng = np.random.default_rng(14)
    u1 = haar_unitary(1, rng)
    assert abs(abs(u1[0, 0]) - 1) < 1e-14
    for d in (2, 5, 16):
        u = haar_unitary(d, rng)
        assert np.max(np.abs(u.conj().T @ u - np.eye(d))) < 1e-12


def test_haar_first_moment():
    rng = np.random.default_rng(15)
    d, n = 4, 10_000
    x = np.array([abs(haar_unitary(d, rng)[0, 0]) ** 2 for _ in range(n)])
    assert abs(x.mean() - 1 / d) < 3 * x.std() / np.sqrt(n)


def test_haar_second_moment():
    rng = np.random.default_rng(16)
    d, n = 3, 4000
    a = random_density([SystemLabel("X", d)], rng).matrix
    b = random_density([SystemLabel("X", d)], rng).matrix
    vals = []
    for _ in range(n):
        u = haar_unitary(d, rng)
        vals.append(np.real(np.trace(a @ u @ b @ u.conj().T)))
    vals = np.array(vals)
    assert abs(vals.mean() - 1 / d) < 4 * vals.std() / np.sqrt(n)


def test_haar_left_invariance():
    # the law of |(V U)_00|^2 matches that of |U_00|^2
    rng = np.random.default_rng(17)
    v = haar_unitary(3, rng)
    x = np.array([abs((v @ haar_unitary(3, rng))[0, 0]) ** 2 for _ in range(4000)])
    assert abs(x.mean() - 1 / 3) < 4 * x.std() / np.sqrt(len(x))


def test_random_pure_state_determinism_and_norm():
    a = random_pure_state([A, B], np.random.default_rng(42))
    b = random_pure_state([A, B], np.random.default_rng(42))
    assert np.array_equal(a.amplitudes, b.amplitudes)
    assert abs(np.linalg.norm(a.amplitudes) - 1) < 1e-12


def test_random_two_qubit_marginal_purity():
    # Haar average of Tr rho_A^2 is (dA + dB) / (dA dB + 1) = 4/5
    rng = np.random.default_rng(18)
    p = np.array([partial_trace(random_pure_state([A, B], rng), ["A"]).purity() for _ in range(5000)])
    assert abs(p.mean() - 0.8) < 3 * p.std() / np.sqrt(len(p))


def test_isometry_map_contract():
    rng = np.random.default_rng(19)
    v = IsometryMap([A], [SystemLabel("Y", 4)], random_isometry(2, 4, rng))
    assert np.allclose(v.adjoint().matrix @ v.matrix, np.eye(2))
    with pytest.raises(StateError):
        IsometryMap([A], [A], np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_max_overlap_identity_and_orthogonal():
    psi = random_pure_state([A, E], np.random.default_rng(20))
    _, ov = max_overlap_isometry(psi, psi)
    assert ov == pytest.approx(1.0, abs=1e-12)
    src = tensor(basis_state([A], [0]), basis_state([E], [0]))
    tgt = tensor(basis_state([B], [0]), basis_state([E], [1]))
    _, ov = max_overlap_isometry(src, tgt)
    assert ov == pytest.approx(0.0, abs=1e-12)


def test_max_overlap_matches_uhlmann_fidelity():
    rng = np.random.default_rng(21)
    for _ in range(50):
        src = random_pure_state([A, B, E], rng)
        tgt = random_pure_state([SystemLabel("Y", 4), E], rng)
        v, ov = max_overlap_isometry(reorder(src, ["A", "B", "E"]), tgt)
        f = fidelity(partial_trace(src, ["E"]), partial_trace(tgt, ["E"]))
        assert abs(ov**2 - f) < 1e-9
        achieved = abs(np.vdot(tgt.amplitudes, np.kron(v.matrix, np.eye(2)) @ src.amplitudes))
        assert achieved == pytest.approx(ov, abs=1e-12)


def test_max_overlap_local_optimality():
    rng = np.random.default_rng(22)
    src = random_pure_state([A, E], rng)
    tgt = random_pure_state([SystemLabel("Y", 3), E], rng)
    v, ov = max_overlap_isometry(src, tgt)
    for _ in range(100):
        h = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        w, vec = np.linalg.eigh(h + h.conj().T)
        pert = (vec * np.exp(1e-3j * w)) @ vec.conj().T
        vv = pert @ v.matrix
        val = abs(np.vdot(tgt.amplitudes, np.kron(vv, np.eye(2)) @ src.amplitudes))
        assert val <= ov + 1e-12


def test_max_overlap_target_too_small():
    src = random_pure_state([SystemLabel("X", 4), SystemLabel("E", 4)], np.random.default_rng(23))
    tgt = random_pure_state([SystemLabel("Y", 2), SystemLabel("E", 4)], np.random.default_rng(24))
    with pytest.raises(StateError):
        max_overlap_isometry(src, tgt)


def test_json_roundtrip(tmp_path):
    rng = np.random.default_rng(25)
    psi = random_pure_state([A, SystemLabel("B", 3)], rng)
    rho = random_density([A], rng)
    for s in (psi, rho):
        doc = json.loads(json.dumps(state_to_json(s)))
        back = state_from_json(doc)
        assert back.names == s.names
    save_state(psi, tmp_path / "s.json")
    np.testing.assert_allclose(load_state(tmp_path / "s.json").amplitudes, psi.amplitudes)
    with pytest.raises(StateError):
        state_from_json({"systems": [{"name": "A", "dim": 2}]})

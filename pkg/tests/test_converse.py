import numpy as np
import pytest

from qredist.converse import (
    AssistedSimulation,
    audit_simulation,
    block_residuals,
    compose_assisted,
    entanglement_fidelity,
    entanglement_fidelity_direct,
    fidelity_bound_audit,
    random_channel,
    random_simulation,
    schmidt_coefficients,
    ssa_operational_audit,
    stinespring_kraus,
)
from qredist.entropy import Partition
from qredist.qcore import (
    PureState,
    StateError,
    SystemLabel,
    basis_state,
    maximally_mixed,
    random_isometry,
    random_pure_state,
    tensor,
)

ACBR = Partition(A=("A",), C=("C",), B=("B",), R=("R",))


def test_identity_channel_fidelity():
    assert entanglement_fidelity([np.eye(3)], 3) == pytest.approx(1.0)
    assert entanglement_fidelity_direct([np.eye(3)], 3) == pytest.approx(1.0)


def test_depolarizing_fidelity():
    k = 2
    kraus = [np.outer(np.eye(k)[i], np.eye(k)[j]) / np.sqrt(k) for i in range(k) for j in range(k)]
    assert entanglement_fidelity(kraus, k) == pytest.approx(1 / k**2)
    assert entanglement_fidelity_direct(kraus, k) == pytest.approx(1 / k**2)


def test_fidelity_paths_agree_random():
    rng = np.random.default_rng(0)
    for k in range(1, 9):
        kraus = random_channel(k, k, rng, env=3)
        assert abs(entanglement_fidelity(kraus, k) - entanglement_fidelity_direct(kraus, k)) < 1e-10


def test_fidelity_shape_error():
    with pytest.raises(StateError):
        entanglement_fidelity([np.ones((2, 3))], 2)


def test_stinespring_trace_preserving():
    rng = np.random.default_rng(1)
    kraus = stinespring_kraus(random_isometry(3, 8, rng), 4)
    s = sum(k.conj().T @ k for k in kraus)
    assert np.max(np.abs(s - np.eye(3))) < 1e-12
    with pytest.raises(ValueError):
        stinespring_kraus(random_isometry(3, 8, rng), 3)


def test_schmidt_coefficients_reconstruct():
    rng = np.random.default_rng(2)
    g = rng.standard_normal(9) + 1j * rng.standard_normal(9)
    psi = g / np.linalg.norm(g)
    lam, u, vh = schmidt_coefficients(psi, 3)
    assert lam.sum() == pytest.approx(1.0)
    rebuilt = sum(np.sqrt(lam[i]) * np.kron(u[:, i], vh[i]) for i in range(3))
    np.testing.assert_allclose(rebuilt, psi, atol=1e-12)


def test_identity_simulation():
    k = 2
    sim = AssistedSimulation([np.eye(k)], [np.eye(k)], [1.0], k, k)
    kraus = compose_assisted(sim)
    assert len(kraus) == 1
    np.testing.assert_allclose(kraus[0], np.eye(k))
    assert audit_simulation(sim).entanglement_fidelity == pytest.approx(1.0)


def test_trivial_channel_replacement():
    # |Q| = 1: encoder discards K, decoder prepares |0>
    k = 3
    enc = [np.eye(k)[i][None, :] for i in range(k)]
    dec = [np.eye(k)[:, :1]]
    a = audit_simulation(AssistedSimulation(enc, dec, [1.0], k, 1))
    assert a.entanglement_fidelity == pytest.approx(1 / k**2)
    assert a.ok


def test_simulation_validation():
    with pytest.raises(StateError):
        AssistedSimulation([np.eye(2)], [np.eye(2)], [0.5, 0.4], 2, 2)
    with pytest.raises(StateError):
        AssistedSimulation([np.eye(2) * 0.5], [np.eye(2)], [1.0], 2, 2)
    with pytest.raises(StateError):
        AssistedSimulation([np.eye(3)], [np.eye(2)], [1.0], 2, 2)


def test_block_identities():
    rng = np.random.default_rng(3)
    for _ in range(20):
        sim = random_simulation(4, 2, rng)
        r = block_residuals(sim)
        assert max(r.values()) < 1e-10


def test_random_audit_maximally_entangled():
    rep = fidelity_bound_audit(4, 2, 500, np.random.default_rng(4), maximally_entangled=True)
    assert rep["violations"] == 0
    assert rep["max_fidelity"] <= 0.5 + 1e-9
    assert rep["max_path_gap"] < 1e-10
    assert rep["max_trace_sum_over_cs"] <= 1 + 1e-9


def test_from_state_rank_deficient_assistance():
    rng = np.random.default_rng(5)
    enc = random_channel(2 * 3, 2, rng)
    dec = random_channel(2 * 3, 2, rng)
    psi = np.kron(np.eye(3)[0], np.eye(3)[1])
    sim = AssistedSimulation.from_state(enc, dec, psi, 2, 2, 3)
    assert sim.lam == pytest.approx([1.0, 0.0, 0.0])
    assert audit_simulation(sim).ok


def test_audit_deterministic():
    a = fidelity_bound_audit(2, 1, 20, 7)
    b = fidelity_bound_audit(2, 1, 20, 7)
    assert a == b


def test_ssa_product_state():
    psi = tensor(random_pure_state([SystemLabel("A", 2), SystemLabel("C", 2)], np.random.default_rng(6)),
                 basis_state([SystemLabel("B", 2), SystemLabel("R", 2)], [0, 0]))
    rep = ssa_operational_audit(psi, ACBR, n=10, delta=0.1)
    assert rep["qubit_gap"] == pytest.approx(0.0, abs=1e-9)
    assert rep["entfid_bound"] == 2.0 ** 1
    assert rep["ssa_ok"]


def test_ssa_ghz_saturated():
    amp = np.zeros(16)
    amp[0] = amp[-1] = 2**-0.5
    psi = PureState([SystemLabel(n, 2) for n in "ACBR"], amp)
    rep = ssa_operational_audit(psi, ACBR)
    assert rep["I(C;R|B)"] == pytest.approx(0.0, abs=1e-9)
    assert rep["saturated"]


def test_ssa_random_audit():
    rng = np.random.default_rng(8)
    labs = [SystemLabel(n, 2) for n in "ACBR"]
    worst = min(ssa_operational_audit(random_pure_state(labs, rng), ACBR)["I(C;R|B)"] for _ in range(1000))
    assert worst >= -1e-9


def test_ssa_rejects_mixed():
    with pytest.raises(StateError):
        ssa_operational_audit(maximally_mixed([SystemLabel(n, 2) for n in "ACBR"]), ACBR)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qredist.entropy import (
    Partition,
    cond_mutual_info,
    conditional_entropy,
    entropy,
    entropy_report,
    mutual_info,
    potentials,
    rate_region,
)
from qredist.qcore import (
    DensityOperator,
    PureState,
    StateError,
    SystemLabel,
    basis_state,
    max_entangled,
    maximally_mixed,
    partial_trace,
    random_density,
    random_pure_state,
    tensor,
)

Q = {n: SystemLabel(n, 2) for n in "ACBR"}
ACBR = Partition(A=("A",), C=("C",), B=("B",), R=("R",))


def ghz4():
    amp = np.zeros(16)
    amp[0] = amp[-1] = 2**-0.5
    return PureState([Q[n] for n in "ACBR"], amp)


def bell_with(partner):
    rest = [n for n in "ABR" if n != partner]
    psi = max_entangled(Q["C"], Q[partner])
    for n in rest:
        psi = tensor(psi, basis_state([Q[n]], [0]))
    return psi


def random4(rng):
    return random_pure_state([Q[n] for n in "ACBR"], rng)


def test_entropy_examples():
    assert entropy(maximally_mixed([Q["A"]])) == pytest.approx(1.0)
    assert entropy(random_pure_state([Q["A"], Q["B"]], np.random.default_rng(0))) == pytest.approx(0.0, abs=1e-12)
    assert entropy(DensityOperator([Q["A"]], np.diag([0.75, 0.25]))) == pytest.approx(0.8112781244591328, abs=1e-12)


def test_entropy_rejects_non_psd():
    with pytest.raises(StateError):
        entropy(DensityOperator([Q["A"]], np.diag([1.1, -0.1])))


def test_conditional_entropy_examples():
    bell = max_entangled(Q["A"], Q["B"])
    assert conditional_entropy(bell, ["A"], ["B"]) == pytest.approx(-1.0)
    rng = np.random.default_rng(1)
    r = random_density([Q["A"]], rng)
    prod = tensor(r, random_density([Q["B"]], rng))
    assert conditional_entropy(prod, ["A"], ["B"]) == pytest.approx(entropy(r), abs=1e-10)


def test_conditional_entropy_definitional_oracle():
    rho = random_density([Q["A"], Q["B"]], np.random.default_rng(2))
    m = rho.matrix.reshape(2, 2, 2, 2)
    rho_b = np.einsum("abac->bc", m)

    def h(x):
        w = np.linalg.eigvalsh(x)
        w = w[w > 1e-15]
        return float(-(w * np.log2(w)).sum())

    assert conditional_entropy(rho, ["A"], ["B"]) == pytest.approx(h(rho.matrix) - h(rho_b), abs=1e-10)


def test_overlapping_labels_rejected():
    rho = random_density([Q["A"], Q["B"]], np.random.default_rng(3))
    with pytest.raises(StateError):
        mutual_info(rho, ["A"], ["A", "B"])


def test_cmi_examples():
    rng = np.random.default_rng(4)
    prod = tensor(tensor(random_density([Q["A"]], rng), random_density([Q["B"]], rng)), random_density([Q["C"]], rng))
    assert cond_mutual_info(prod, ["A"], ["B"], ["C"]) == pytest.approx(0.0, abs=1e-10)
    assert cond_mutual_info(ghz4(), ["R"], ["C"], ["B"]) == pytest.approx(0.0, abs=1e-10)
    assert cond_mutual_info(bell_with("R"), ["R"], ["C"], ["B"]) == pytest.approx(2.0, abs=1e-10)


def test_strong_subadditivity_mixed():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        rho = random_density([Q["A"], Q["B"], Q["C"]], rng)
        assert cond_mutual_info(rho, ["A"], ["B"], ["C"]) >= -1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pure_duality(seed):
    psi = random4(np.random.default_rng(seed))
    assert abs(cond_mutual_info(psi, ["C"], ["R"], ["A"]) - cond_mutual_info(psi, ["C"], ["R"], ["B"])) < 1e-9


def test_entropy_report_pure_complement():
    psi = random4(np.random.default_rng(6))
    rep = entropy_report(psi)
    assert rep[[]] == 0.0
    assert rep.purity_violation(psi.names) < 1e-9


@pytest.mark.parametrize(
    "partner, corner",
    [("R", (1.0, 0.0)), ("A", (0.0, 1.0)), ("B", (0.0, -1.0))],
)
def test_rate_region_bell_corners(partner, corner):
    reg = rate_region(bell_with(partner), ACBR)
    assert reg.corner == pytest.approx(corner, abs=1e-9)


def test_rate_region_ghz():
    assert rate_region(ghz4(), ACBR).corner == pytest.approx((0.0, 0.0), abs=1e-9)


def test_rate_region_rejects_mixed():
    with pytest.raises(StateError):
        rate_region(maximally_mixed([Q[n] for n in "ACBR"]), ACBR)


def test_rate_region_rejects_bad_partition():
    with pytest.raises(StateError):
        rate_region(ghz4(), Partition(A=("A",), C=("C",), B=("B",)))
    with pytest.raises(StateError):
        rate_region(ghz4(), Partition(A=("A",), C=("C", "A"), B=("B",), R=("R",)))


def test_rate_region_consistency_random():
    rng = np.random.default_rng(7)
    for _ in range(50):
        reg = rate_region(random4(rng), ACBR)
        q, e = reg.corner
        assert q == reg.q_min
        assert q + e == pytest.approx(reg.sum_min, abs=1e-9)
        assert reg.q_min >= -1e-9
        assert reg.contains(q, e)
        assert not reg.contains(q - 1e-3, e + 1)


def test_potentials_product_no_drop():
    rng = np.random.default_rng(8)
    psi = tensor(random_pure_state([Q["A"], Q["C"]], rng), random_pure_state([Q["B"], Q["R"]], rng))
    assert potentials(psi, ACBR).dynamic_drop == pytest.approx(0.0, abs=1e-9)


def test_potentials_ghz():
    p = potentials(ghz4(), ACBR)
    assert [p.D_init_ab, p.D_final_ab, p.S_init_ab, p.S_final_ab] == pytest.approx([0.5] * 4, abs=1e-9)


def test_potentials_reproduce_corner():
    rng = np.random.default_rng(9)
    for _ in range(50):
        psi = random4(rng)
        p, reg = potentials(psi, ACBR), rate_region(psi, ACBR)
        assert p.dynamic_drop == pytest.approx(reg.corner[0], abs=1e-9)
        assert p.static_rise == pytest.approx(reg.corner[1], abs=1e-9)
        assert p.dynamic_drop == pytest.approx(0.5 * cond_mutual_info(psi, ["C"], ["R"], ["A"]), abs=1e-9)
        assert max(p.identity_residuals().values()) < 1e-9


def test_potentials_grouped_roles():
    # roles holding several systems and an empty role
    rng = np.random.default_rng(10)
    labs = [SystemLabel(n, 2) for n in ("a1", "a2", "c", "r")]
    psi = random_pure_state(labs, rng)
    part = Partition(A=("a1", "a2"), C=("c",), R=("r",))
    reg = rate_region(psi, part)
    # B empty: I(R;C) with H(RC) = H(A) on a pure state
    h = lambda keep: entropy(partial_trace(psi, keep))
    want = 0.5 * (h(["r"]) + h(["c"]) - h(["a1", "a2"]))
    assert reg.q_min == pytest.approx(want, abs=1e-9)

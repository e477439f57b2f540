import numpy as np
import pytest
import scipy.sparse as sp

from conftest import make_problem
from sgfem import diagnostics as dg


@pytest.fixture(scope="module")
def prob():
    return make_problem(8, 2, 2, 0.3)


def test_bt_spectrum_in_unit_interval(prob):
    op = prob[3]
    rep = dg.spectrum_precond_BT(op)
    assert len(rep.eigenvalues) == op.shape[0]
    assert np.all(np.diff(rep.eigenvalues.real) >= 0)
    assert rep.max_imag_abs <= 1e-9
    assert rep.min_real > 0 and rep.max_real <= 1 + 1e-8
    assert rep.bound_satisfied
    assert rep.extras["multiplicity_of_one"] >= rep.extras["dim_A_hat"]


def test_bt_spectrum_explicit_oracle(prob):
    # one-line oracle: eigenvalues of A B^{-1} with B the lower block triangle
    op = prob[3]
    A = dg.assemble_explicit(op).toarray()
    s = op.split_point * op.n_x
    B = A.copy()
    B[:s, s:] = 0
    ev = np.sort(np.linalg.eigvals(A @ np.linalg.inv(B)).real)
    np.testing.assert_allclose(dg.spectrum_precond_BT(op).eigenvalues.real, ev, atol=1e-10)


def test_sigma0_everything_is_one():
    op = make_problem(8, 2, 2, 0.0)[3]
    for rep in (dg.spectrum_precond_BT(op), dg.generalized_schur_spectrum(op), dg.spectrum_precond_BS(op)):
        np.testing.assert_allclose(rep.eigenvalues, 1.0, atol=1e-12)


def test_schur_matches_bt_spectrum(prob):
    op = prob[3]
    bt = dg.spectrum_precond_BT(op)
    s = dg.generalized_schur_spectrum(op)
    assert s.min_real > 0 and s.max_real <= 1 + 1e-8
    ok, d = dg.compare_with_schur(bt, s)
    assert ok and d <= 1e-7


def test_compare_detects_mismatch(prob):
    op = prob[3]
    bt = dg.spectrum_precond_BT(op)
    s = dg.generalized_schur_spectrum(op)
    shifted = dg.SpectralReport.from_eigenvalues(s.eigenvalues * 0.99, 1, True)
    assert not dg.compare_with_schur(bt, shifted)[0]


def test_recursive_variant_contained(prob):
    rep = dg.spectrum_precond_BT(prob[3], "recursive")
    assert rep.min_real > 0 and rep.max_real <= 1 + 1e-8
    assert rep.max_imag_abs < 1e-7
    with pytest.raises(ValueError):
        dg.spectrum_precond_BT(prob[3], "upper")


def test_bs_spectrum(prob):
    rep = dg.spectrum_precond_BS(prob[3])
    assert rep.max_imag_abs < 1e-9
    assert rep.min_real > 0 and rep.max_real <= 1 + 1e-8


def test_size_guard():
    op = make_problem(32, 2, 2, 0.1)[3]  # 961 * 6 unknowns
    for fn in (dg.spectrum_precond_BT, dg.generalized_schur_spectrum, dg.spectrum_precond_BS):
        with pytest.raises(ValueError):
            fn(op)


def test_p1_constants_are_one():
    op = make_problem(8, 4, 1, 0.1)[3]
    np.testing.assert_allclose(dg.p1_constants(op), 1.0, rtol=1e-14)


@pytest.mark.parametrize("sigma", [0.1, 0.3])
def test_p1_bound(sigma):
    _, kl, _, op, _ = make_problem(16, 4, 1, sigma)
    rep = dg.p1_lower_bound(op, kl)
    assert rep.extras["c_equal"]
    assert rep.bound_satisfied
    assert rep.extras["min_eigenvalue"] >= rep.bound_value


def test_p1_bound_trivial_and_monotone():
    _, kl, _, op, _ = make_problem(8, 4, 1, 0.0)
    rep = dg.p1_lower_bound(op, kl)
    assert rep.bound_value == 1.0
    assert rep.extras["min_eigenvalue"] == pytest.approx(1.0, abs=1e-12)
    bound = {}
    for sigma in (0.1, 0.3):
        _, kl, _, op, _ = make_problem(8, 4, 1, sigma)
        bound[sigma] = dg.p1_lower_bound(op, kl).bound_value
    lo, hi = bound[0.1], bound[0.3]
    assert hi < lo < 1


def test_p1_bound_requires_p1(prob):
    with pytest.raises(ValueError):
        dg.p1_lower_bound(prob[3], prob[1])


def test_interval_lemma_all_k():
    _, kl, _, op, _ = make_problem(16, 6, 1, 0.2)
    reps = dg.kl_interval_checks(op, kl)
    assert len(reps) == 6
    for k, rep in enumerate(reps):
        assert rep.bound_satisfied
        assert rep.bound_value == pytest.approx(np.sqrt(kl.eigenvalues[k]) * rep.extras["sup_norm"])
        assert rep.max_imag_abs == 0.0


def test_interval_zero_field():
    K0 = make_problem(8, 1, 1, 0.0)[3].K[0]
    rep = dg.stiffness_ratio_interval(K0, sp.csr_matrix(K0.shape), 0.0, lambda x, y: 0 * x, 1.0)
    np.testing.assert_array_equal(rep.eigenvalues, 0.0)
    assert rep.bound_satisfied


def test_interval_constant_field_exact():
    # b = 1: K_k = sqrt(lambda) K0 / a, so every eigenvalue sits on the bound up to the inflation
    op = make_problem(8, 1, 1, 0.0)[3]
    K0 = op.K[0]
    rep = dg.stiffness_ratio_interval(K0, 0.3 * K0, 0.09, lambda x, y: 1 + 0 * x, 1.0)
    np.testing.assert_allclose(rep.eigenvalues, 0.3, rtol=1e-12)
    assert rep.bound_value == pytest.approx(0.303)


def test_report_to_dict(prob):
    d = dg.spectrum_precond_BT(prob[3]).to_dict(with_eigenvalues=True)
    assert d["n_eigenvalues"] == len(d["eigenvalues_real"]) == prob[3].shape[0]
    assert isinstance(d["multiplicity_of_one"], int)

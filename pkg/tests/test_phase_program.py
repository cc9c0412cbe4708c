import numpy as np
import pytest

from ris_cnoma.phase_program import (IlpProblem,
                                     SizeGuardError, brute_force_phase_search,
                                     linearize_quadratic, quadratic_value,
                                     solve_binary_feasibility, theta_delta)


def rand_form(rng, l):
    a = rng.standard_normal((l, l)) + 1j * rng.standard_normal((l, l))
    a = 0.5 * (a + a.conj().T)
    b = rng.standard_normal(l) + 1j * rng.standard_normal(l)
    return a, b


def test_theta_delta_grid():
    grid = theta_delta(1)  # Q=2: differences {-pi, 0, pi}
    assert np.allclose(grid, [-np.pi, 0.0, np.pi])
    grid = theta_delta(2)
    assert len(grid) == 7
    assert np.allclose(grid, 2 * np.pi * np.arange(-3, 4) / 4)


def test_linearization_identity_exact():
    # psi equals the quadratic form at every consistent one-hot assignment
    rng = np.random.default_rng(0)
    for _ in range(40):
        l = int(rng.integers(1, 5))
        bits = int(rng.integers(1, 4))
        q = 2 ** bits
        a, b = rand_form(rng, l)
        con = linearize_quadratic(a, b, 0.0, bits)
        prob = IlpProblem(l, bits, [con])
        idx = rng.integers(0, q, l)
        theta = 2 * np.pi * idx / q
        direct = quadratic_value(a, b, 0.0, theta)
        scale = max(1.0, abs(direct))
        assert abs(prob.psi(con, idx) - direct) <= 1e-10 * scale
        assert prob.coupling_residual(idx) <= 1e-10


def test_one_hot_groups_shape():
    con = linearize_quadratic(np.zeros((3, 3)), np.zeros(3), 0.0, 2)
    prob = IlpProblem(3, 2, [con])
    delta, tilde = prob.one_hot_groups(np.array([0, 1, 3]))
    assert delta.shape == (3, 4)
    assert np.all(delta.sum(axis=1) == 1.0)
    assert len(tilde) == 3
    for row in tilde.values():
        assert row.shape == (7,) and row.sum() == 1.0


def test_trivially_feasible_constraint():
    con = linearize_quadratic(np.zeros((2, 2)), np.zeros(2), -1.0, 1)
    res = solve_binary_feasibility(IlpProblem(2, 1, [con]))
    assert res.feasible and res.slack == pytest.approx(1.0)


def test_forced_phase_difference():
    # only theta1 - theta2 = pi satisfies the constraint at B=1
    a = np.array([[0.0, -1.0], [-1.0, 0.0]])
    con = linearize_quadratic(a, np.zeros(2), 1.9, 1)
    res = solve_binary_feasibility(IlpProblem(2, 1, [con]))
    assert res.feasible
    assert abs((res.theta[0] - res.theta[1]) % (2 * np.pi) - np.pi) < 1e-12
    # cross-check by enumerating all four combinations
    _, _, best = brute_force_phase_search([(a, np.zeros(2), 0.0, 1.9)], 1, 2,
                                          mode="feasibility")
    assert res.slack == pytest.approx(best, abs=1e-12)


def test_unsatisfiable_constraint():
    rng = np.random.default_rng(1)
    a, b = rand_form(rng, 3)
    _, _, best = brute_force_phase_search((a, b, 0.0), 1, 3)
    con = linearize_quadratic(a, b, best + 1.0, 1)  # above the global max
    res = solve_binary_feasibility(IlpProblem(3, 1, [con]))
    assert not res.feasible
    assert res.slack < 0.0


def test_branch_and_bound_equals_enumeration():
    # spec invariant: exact on every instance with Q^L <= 4096
    rng = np.random.default_rng(2)
    for trial in range(50):
        l = int(rng.integers(2, 5))
        bits = int(rng.integers(1, 4))
        if (2 ** bits) ** l > 4096:
            bits = 1
        cons, forms = [], []
        for _ in range(int(rng.integers(1, 4))):
            a, b = rand_form(rng, l)
            rhs = float(rng.standard_normal() * 2)
            cons.append(linearize_quadratic(a, b, rhs, bits))
            forms.append((a, b, 0.0, rhs))
        res = solve_binary_feasibility(IlpProblem(l, bits, cons))
        bi, _, bv = brute_force_phase_search(forms, bits, l, mode="feasibility")
        assert res.slack == pytest.approx(bv, abs=1e-10), trial
        assert res.feasible == (bv >= 0.0)
        assert np.array_equal(res.indices, bi), trial


def test_objective_mode_exact_maximizer():
    rng = np.random.default_rng(3)
    for trial in range(20):
        l, bits = 3, 2
        a, b = rand_form(rng, l)
        acon, bcon = rand_form(rng, l)
        rhs = float(rng.standard_normal())
        cons = [linearize_quadratic(acon, bcon, rhs, bits)]
        objective = linearize_quadratic(a, b, 0.0, bits)
        res = solve_binary_feasibility(IlpProblem(l, bits, cons),
                                       objective=objective)
        # oracle: enumerate, filter feasible, take the best objective
        best = -np.inf
        feasible_any = False
        for n in range(4 ** l):
            idx = np.array([(n // 4 ** (l - 1 - m)) % 4 for m in range(l)])
            theta = 2 * np.pi * idx / 4
            if quadratic_value(acon, bcon, 0.0, theta) >= rhs:
                feasible_any = True
                best = max(best, quadratic_value(a, b, 0.0, theta))
        assert res.feasible == feasible_any, trial
        if feasible_any:
            assert res.objective == pytest.approx(best, abs=1e-10), trial


def test_brute_force_constant_form():
    bi, bt, bv = brute_force_phase_search((np.zeros((3, 3)), np.zeros(3), 2.5),
                                          1, 3)
    assert bv == pytest.approx(2.5)
    assert np.array_equal(bi, np.zeros(3, int))  # lexicographic tie-break


def test_brute_force_single_element_alignment():
    bi, bt, bv = brute_force_phase_search((np.zeros((1, 1)),
                                           np.array([1.0 + 0j]), 3.0), 2, 1)
    assert bi[0] == 0 and bv == pytest.approx(5.0)


def test_brute_force_dominates_random_vectors():
    rng = np.random.default_rng(4)
    a, b = rand_form(rng, 4)
    _, _, bv = brute_force_phase_search((a, b, 1.0), 2, 4)
    for _ in range(100):
        theta = 2 * np.pi * rng.integers(0, 4, 4) / 4
        assert bv >= quadratic_value(a, b, 1.0, theta) - 1e-10


def test_size_guards():
    with pytest.raises(SizeGuardError):
        brute_force_phase_search((np.zeros((30, 30)), np.zeros(30), 0.0), 3, 30)
    con = linearize_quadratic(np.zeros((9, 9)), np.zeros(9), 0.0, 1)
    with pytest.raises(SizeGuardError):
        solve_binary_feasibility(IlpProblem(9, 1, [con]))
    # override works
    res = solve_binary_feasibility(IlpProblem(9, 1, [con]), guard=False)
    assert res.feasible


def test_quadratic_value_convention():
    # value(theta) = sum_mn A_mn e^{j(tm-tn)} + 2 Re sum_m b_m e^{j tm} + c
    rng = np.random.default_rng(5)
    a, b = rand_form(rng, 3)
    theta = rng.uniform(0, 2 * np.pi, 3)
    expected = sum(a[m, n] * np.exp(1j * (theta[m] - theta[n]))
                   for m in range(3) for n in range(3)).real
    expected += 2 * sum(b[m] * np.exp(1j * theta[m]) for m in range(3)).real
    expected += 0.7
    assert quadratic_value(a, b, 0.7, theta) == pytest.approx(expected, rel=1e-12)

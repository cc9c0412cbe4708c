import numpy as np
import pytest

from ris_cnoma.sdp import (SdpConstraint, SdpContractError, SdpProblem,
                           dump_sdp_problem, max_eigpair, solve_sdp)


def rand_hermitian(rng, n, cplx=True):
    a = rng.standard_normal((n, n))
    if cplx:
        a = a + 1j * rng.standard_normal((n, n))
    return 0.5 * (a + a.conj().T)


def psd_project(x):
    vals, vecs = np.linalg.eigh(0.5 * (x + x.conj().T))
    return (vecs * np.clip(vals, 0.0, None)) @ vecs.conj().T


def penalty_descent_sdp(c, cons, n, stages=6, iters_per_stage=8000, rho0=10.0):
    """Independent oracle: quadratic-penalty projected gradient descent."""
    x = np.eye(n, dtype=complex)
    rho = rho0
    for _ in range(stages):
        lip = np.linalg.norm(c) + rho * sum(np.linalg.norm(a) ** 2
                                            for a, _, _ in cons)
        step = 1.0 / max(lip, 1e-12)
        for _ in range(iters_per_stage):
            grad = c.astype(complex).copy()
            for a, sense, b in cons:
                val = np.vdot(a, x).real
                if sense == ">=":
                    gap = max(0.0, b - val)
                    if gap > 0:
                        grad -= rho * gap * a
                else:
                    grad -= rho * (b - val) * a
            x = psd_project(x - step * grad)
        rho *= 10.0
    return x


def test_min_trace_with_pinned_entry():
    e11 = np.zeros((2, 2))
    e11[0, 0] = 1.0
    sol = solve_sdp(SdpProblem([2], [np.eye(2)],
                               [SdpConstraint({0: e11}, "==", 1.0)]))
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(1.0, abs=1e-6)
    x = sol.blocks[0]
    assert x[0, 0] == pytest.approx(1.0, abs=1e-6)
    assert abs(x[1, 1]) < 1e-6


def test_minimum_eigenvalue_variational_form():
    rng = np.random.default_rng(0)
    c = rand_hermitian(rng, 5)
    sol = solve_sdp(SdpProblem([5], [c],
                               [SdpConstraint({0: np.eye(5)}, "==", 1.0)]))
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(np.linalg.eigvalsh(c)[0], abs=1e-6)


def test_random_instance_vs_penalty_descent_oracle():
    rng = np.random.default_rng(1)
    n = 6
    c = rand_hermitian(rng, n) + 2 * n * np.eye(n)
    x0 = rand_hermitian(rng, n)
    x0 = x0 @ x0.conj().T / n + 0.1 * np.eye(n)
    cons = [(rand_hermitian(rng, n), ">=", None) for _ in range(4)]
    cons = [(a, s, np.vdot(a, x0).real - 0.2) for a, s, _ in cons]
    cons.append((np.eye(n), "==", np.trace(x0).real))
    sol = solve_sdp(SdpProblem(
        [n], [c], [SdpConstraint({0: a}, s, b) for a, s, b in cons]))
    assert sol.status == "optimal"
    x_oracle = penalty_descent_sdp(c, cons, n)
    assert np.vdot(c, x_oracle).real == pytest.approx(sol.objective, rel=1e-5)


def test_kkt_constructed_instances():
    """Instances with an optimum known exactly from complementary slackness.

    Rank-one primal optimum with a mix of active and inactive constraints;
    strict complementarity makes the optimum unique generically.
    """
    rng = np.random.default_rng(2)
    for trial in range(10):
        n, m_act, m_slack = 5, 2, 2
        u = np.linalg.qr(rng.standard_normal((n, n))
                         + 1j * rng.standard_normal((n, n)))[0]
        x_star = rng.uniform(0.5, 2.0) * np.outer(u[:, 0], u[:, 0].conj())
        z_star = (u[:, 1:] * rng.uniform(0.5, 2.0, n - 1)) @ u[:, 1:].conj().T
        a_mats = [rand_hermitian(rng, n) for _ in range(m_act + m_slack)]
        y_star = np.concatenate([rng.uniform(0.1, 1.0, m_act),
                                 np.zeros(m_slack)])
        c = sum(y * a for y, a in zip(y_star, a_mats)) + z_star
        b = np.array([np.vdot(a, x_star).real for a in a_mats])
        b[m_act:] -= rng.uniform(0.5, 1.0, m_slack)  # inactive at the optimum
        cons = [SdpConstraint({0: a}, ">=", bi) for a, bi in zip(a_mats, b)]
        sol = solve_sdp(SdpProblem([n], [c], cons))
        assert sol.status == "optimal", trial
        assert sol.objective == pytest.approx(np.vdot(c, x_star).real,
                                              rel=1e-6), trial


def test_inequality_slack_behavior():
    rng = np.random.default_rng(3)
    h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    hh = np.outer(h, h.conj())
    sol = solve_sdp(SdpProblem([4], [np.eye(4)],
                               [SdpConstraint({0: hh}, ">=", 1.0)]))
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(1.0 / np.linalg.norm(h) ** 2, rel=1e-6)


def test_infeasible_certificate():
    e11 = np.zeros((2, 2))
    e11[0, 0] = 1.0
    cons = [SdpConstraint({0: e11}, ">=", 1.0),
            SdpConstraint({0: -e11}, ">=", 0.0)]
    sol = solve_sdp(SdpProblem([2], [np.eye(2)], cons))
    assert sol.status == "infeasible"


def test_weak_duality_every_iterate():
    rng = np.random.default_rng(4)
    for trial in range(5):
        n = rng.integers(3, 8)
        c = rand_hermitian(rng, n) + n * np.eye(n)
        x0 = np.eye(n) * rng.uniform(0.5, 2.0)
        cons = []
        for _ in range(rng.integers(1, 5)):
            a = rand_hermitian(rng, n)
            cons.append(SdpConstraint({0: a}, ">=", np.vdot(a, x0).real - 0.5))
        sol = solve_sdp(SdpProblem([n], [c], cons))
        for rec in sol.iterates:
            assert rec["pobj"] - rec["dobj"] + rec["correction"] \
                >= -1e-9 * (1.0 + abs(rec["pobj"]))


def test_fixed_diagonal_constraints():
    rng = np.random.default_rng(5)
    n = 6
    b0 = rand_hermitian(rng, n)
    b0 = b0 @ b0.conj().T
    prob = SdpProblem([n], [None],
                      [SdpConstraint({0: b0}, ">=", 0.3 * np.trace(b0).real)],
                      fixed_diag=[np.ones(n)])
    sol = solve_sdp(prob)
    assert sol.status == "optimal"
    v = sol.blocks[0]
    assert np.max(np.abs(np.diag(v).real - 1.0)) < 1e-6
    assert np.linalg.eigvalsh(v)[0] > -1e-8


def test_multi_block_mixed_senses():
    rng = np.random.default_rng(6)
    a0, a1 = rand_hermitian(rng, 3), rand_hermitian(rng, 4)
    prob = SdpProblem(
        [3, 4], [np.eye(3), np.eye(4)],
        [SdpConstraint({0: a0 @ a0.conj().T + np.eye(3)}, ">=", 1.0),
         SdpConstraint({1: a1 @ a1.conj().T + np.eye(4)}, ">=", 2.0),
         SdpConstraint({0: np.eye(3), 1: np.eye(4)}, ">=", 0.1)])
    sol = solve_sdp(prob)
    assert sol.status == "optimal"
    for x in sol.blocks:
        assert np.linalg.eigvalsh(x)[0] > -1e-9


def test_contract_validation():
    bad = np.array([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(SdpContractError):
        solve_sdp(SdpProblem([2], [bad], []))
    with pytest.raises(SdpContractError):
        SdpConstraint({0: np.eye(2)}, ">>", 1.0)


def test_max_eigpair():
    lam, v = max_eigpair(np.eye(4))
    assert lam == pytest.approx(1.0)
    lam, v = max_eigpair(np.diag([3.0, 1.0]))
    assert lam == pytest.approx(3.0)
    assert abs(abs(v[0]) - 1.0) < 1e-12

    rng = np.random.default_rng(7)
    m = rand_hermitian(rng, 8)
    lam, v = max_eigpair(m)
    assert np.linalg.norm(m @ v - lam * v) <= 1e-9 * np.linalg.norm(m)
    for _ in range(100):
        u = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        u /= np.linalg.norm(u)
        assert lam >= np.vdot(u, m @ u).real - 1e-9

    psd = m @ m.conj().T
    assert np.trace(psd).real >= max_eigpair(psd)[0] - 1e-12

    with pytest.raises(SdpContractError):
        max_eigpair(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_dump_problem_format():
    e11 = np.zeros((2, 2))
    e11[0, 0] = 1.0
    prob = SdpProblem([2], [np.eye(2)], [SdpConstraint({0: e11}, ">=", 1.0)],
                      fixed_diag=[None])
    text = dump_sdp_problem(prob)
    assert text.startswith("blocks 2\n")
    assert "con 0 >= 1" in text
    assert "A 0 0 0 0 1" in text

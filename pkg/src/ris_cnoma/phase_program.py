"""Exact solvers for the discrete phase-shift programs.

A quadratic form ``v^H A v + 2 Re(v^H b) + c`` over unit-modulus entries
``[v]_m = exp(-j theta_m)`` with ``theta_m`` from the Q-point alphabet is
linear in one-hot indicators: one group ``delta_m`` per element (over the Q
non-negative alphabet phases) and one group ``delta_tilde_{m,n}`` per pair
(over the 2Q-1 possible phase differences), coupled through
``theta_delta^T delta_m - theta_delta^T delta_n = theta_delta^T
delta_tilde_{m,n}``.  The search below branches over the element groups and
derives the pairwise groups from the coupling, which preserves exactness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: default branch-and-bound size guard
GUARD_L = 8
GUARD_B = 3

#: enumeration guard for the brute-force oracle
BRUTE_FORCE_LIMIT = 10 ** 7


class SizeGuardError(RuntimeError):
    """Desk-scale guard tripped; use the low-complexity path instead."""


def theta_delta(bits: int) -> np.ndarray:
    """Auxiliary grid of the 2Q-1 possible phases and phase differences."""
    q = 2 ** bits
    return 2.0 * np.pi * np.arange(-(q - 1), q) / q


def quadratic_value(a: np.ndarray, b: np.ndarray, c: float,
                    theta: np.ndarray) -> float:
    """Direct evaluation of the quadratic form at a phase vector."""
    v = np.exp(-1j * np.asarray(theta, float))
    return float((v.conj() @ a @ v).real + 2.0 * (v.conj() @ b).real + c)


@dataclass
class IlpConstraint:
    """One linearized quadratic constraint ``psi(...) >= rhs``.

    ``pair[m, n, q]`` is the coefficient of ``[delta_tilde_{m,n}]_q`` (m < n),
    ``single[m, p]`` the coefficient of the one-hot entry for phase index p of
    element m, ``const`` the diagonal contribution of the quadratic form.
    """

    pair: np.ndarray
    single: np.ndarray
    const: float
    rhs: float
    mag_pair: np.ndarray
    mag_single: np.ndarray

    @property
    def norm(self) -> float:
        return max(1.0, abs(self.rhs))


def linearize_quadratic(a: np.ndarray, b: np.ndarray, rhs: float,
                        bits: int) -> IlpConstraint:
    """Expand ``v^H A v + 2Re(v^H b) >= rhs`` into one-hot coefficients."""
    a = np.asarray(a, complex)
    b = np.asarray(b, complex).reshape(-1)
    l = b.shape[0]
    if a.shape != (l, l):
        raise ValueError("quadratic form dimension mismatch")
    grid = theta_delta(bits)
    v_sum = np.exp(1j * grid)
    pair = 2.0 * np.real(a[:, :, None] * v_sum[None, None, :])
    q = 2 ** bits
    single = 2.0 * np.real(b[:, None] * v_sum[None, q - 1:])
    return IlpConstraint(
        pair=pair,
        single=single,
        const=float(np.real(np.trace(a))),
        rhs=float(rhs),
        mag_pair=np.abs(a),
        mag_single=np.abs(b),
    )


@dataclass
class IlpProblem:
    """Binary feasibility program over the one-hot phase indicators."""

    l_ris: int
    bits: int
    constraints: list

    def __post_init__(self):
        for c in self.constraints:
            if c.single.shape != (self.l_ris, 2 ** self.bits):
                raise ValueError("constraint dimensions inconsistent with problem")

    @property
    def q_levels(self) -> int:
        return 2 ** self.bits

    def decode(self, indices: np.ndarray) -> np.ndarray:
        return 2.0 * np.pi * np.asarray(indices, int) / self.q_levels

    def psi(self, constraint: IlpConstraint, indices: np.ndarray) -> float:
        """psi value of one constraint at a full phase-index assignment."""
        idx = np.asarray(indices, int)
        q = self.q_levels
        val = constraint.const + float(constraint.single[np.arange(self.l_ris), idx].sum())
        diff = idx[:, None] - idx[None, :] + (q - 1)
        iu = np.triu_indices(self.l_ris, 1)
        val += float(constraint.pair[iu[0], iu[1], diff[iu]].sum())
        return val

    def one_hot_groups(self, indices: np.ndarray) -> tuple:
        """Materialize (delta, delta_tilde) for an assignment.

        ``delta`` has one-hot rows over the Q admissible phases; the pairwise
        dict maps (m, n) with m < n to one-hot vectors over the 2Q-1 grid.
        Used by tests to verify the coupling equalities explicitly.
        """
        idx = np.asarray(indices, int)
        q = self.q_levels
        delta = np.zeros((self.l_ris, q))
        delta[np.arange(self.l_ris), idx] = 1.0
        tilde = {}
        for m in range(self.l_ris - 1):
            for n in range(m + 1, self.l_ris):
                row = np.zeros(2 * q - 1)
                row[idx[m] - idx[n] + q - 1] = 1.0
                tilde[(m, n)] = row
        return delta, tilde

    def coupling_residual(self, indices: np.ndarray) -> float:
        grid = theta_delta(self.bits)
        delta, tilde = self.one_hot_groups(indices)
        q = self.q_levels
        theta = delta @ grid[q - 1:]
        worst = 0.0
        for (m, n), row in tilde.items():
            worst = max(worst, abs(theta[m] - theta[n] - row @ grid))
        return worst


@dataclass
class BinaryProgramResult:
    indices: np.ndarray
    theta: np.ndarray
    feasible: bool
    slack: float
    objective: float | None = None
    nodes: int = 0


def solve_binary_feasibility(problem: IlpProblem,
                             objective: IlpConstraint | None = None,
                             guard: bool = True) -> BinaryProgramResult:
    """Exact depth-first branch-and-bound over the phase-index assignments.

    Without an objective the solver returns the assignment maximizing the
    minimum normalized constraint slack (feasible iff that slack is >= 0).
    With a linear objective it returns the exact maximizer subject to all
    constraints.  Matches exhaustive enumeration by construction.
    """
    if guard and (problem.l_ris > GUARD_L or problem.bits > GUARD_B):
        raise SizeGuardError(
            f"binary program with L={problem.l_ris}, B={problem.bits} exceeds the "
            f"desk-scale guard (L<={GUARD_L}, B<={GUARD_B}); use the "
            "low-complexity phase optimizers instead")
    search = _BranchAndBound(problem, objective)
    return search.run()


class _BranchAndBound:
    def __init__(self, problem: IlpProblem, objective):
        self.p = problem
        self.objective = objective
        self.l = problem.l_ris
        self.q = problem.q_levels
        # heaviest elements first: sum of |A| row mass and |b| over constraints
        weights = np.zeros(self.l)
        cons = list(problem.constraints) + ([objective] if objective else [])
        for c in cons:
            weights += c.mag_pair.sum(axis=1) + c.mag_single
        self.order = np.argsort(-weights, kind="stable")
        self.nodes = 0

    def run(self) -> BinaryProgramResult:
        assign = np.full(self.l, -1, int)
        self.best_value = -np.inf
        self.best_assign = None
        self._dfs(assign, 0)
        if self.best_assign is None:
            return BinaryProgramResult(np.zeros(self.l, int),
                                       np.zeros(self.l), False, -np.inf,
                                       None, self.nodes)
        idx = self.best_assign
        slack = min((self.p.psi(c, idx) - c.rhs) / c.norm
                    for c in self.p.constraints) if self.p.constraints else np.inf
        obj = self.p.psi(self.objective, idx) if self.objective else None
        feasible = slack >= 0.0 if self.p.constraints else True
        if self.objective:
            feasible = self.best_value > -np.inf
        return BinaryProgramResult(idx, self.p.decode(idx), bool(feasible),
                                   float(slack), obj, self.nodes)

    def _dfs(self, assign, depth):
        self.nodes += 1
        if depth == self.l:
            value = self._leaf_value(assign)
            if value is None:
                return
            if value > self.best_value or (
                    value == self.best_value
                    and tuple(assign) < tuple(self.best_assign)):
                self.best_value = value
                self.best_assign = assign.copy()
            return
        bound = self._bound(assign)
        if bound is None or bound < self.best_value - 1e-15:
            return
        m = self.order[depth]
        for p in range(self.q):
            assign[m] = p
            self._dfs(assign, depth + 1)
        assign[m] = -1

    def _leaf_value(self, assign):
        slacks = [(self.p.psi(c, assign) - c.rhs) / c.norm
                  for c in self.p.constraints]
        if self.objective is None:
            return min(slacks) if slacks else 0.0
        if any(s < 0.0 for s in slacks):
            return None
        return self.p.psi(self.objective, assign)

    def _bound(self, assign):
        """Upper bound by maximizing each remaining term independently."""
        if self.objective is None:
            ub = min(self._constraint_ub(c, assign, normalized=True)
                     for c in self.p.constraints) if self.p.constraints else 0.0
            return ub
        for c in self.p.constraints:
            if self._constraint_ub(c, assign, normalized=True) < 0.0:
                return None
        return self._constraint_ub(self.objective, assign, normalized=False)

    def _constraint_ub(self, c, assign, normalized):
        q = self.q
        val = c.const
        for m in range(self.l):
            if assign[m] >= 0:
                val += c.single[m, assign[m]]
            else:
                val += c.single[m].max()
        for m in range(self.l - 1):
            for n in range(m + 1, self.l):
                if assign[m] >= 0 and assign[n] >= 0:
                    val += c.pair[m, n, assign[m] - assign[n] + q - 1]
                elif assign[m] >= 0:
                    # reachable difference indices: assign[m] - p + q - 1
                    val += c.pair[m, n, assign[m]:assign[m] + q].max()
                elif assign[n] >= 0:
                    val += c.pair[m, n, q - 1 - assign[n]:2 * q - 1 - assign[n]].max()
                else:
                    val += c.pair[m, n].max()
        if normalized:
            return (val - c.rhs) / c.norm
        return val


def brute_force_phase_search(forms, bits: int, l_ris: int,
                             mode: str = "maximize",
                             chunk: int = 1 << 14) -> tuple:
    """Exhaustive search over all Q**L phase vectors.

    ``mode='maximize'``: ``forms`` is one (A, b, c) triple; returns the phase
    vector maximizing the quadratic form.  ``mode='feasibility'``: ``forms``
    is a list of (A, b, c_offset, rhs) and the minimum normalized slack is
    maximized.  Ties break to the lexicographically smallest index vector.
    Returns (indices, theta, value).
    """
    q = 2 ** bits
    total = q ** l_ris
    if total > BRUTE_FORCE_LIMIT:
        raise SizeGuardError(f"Q^L = {total} exceeds the enumeration guard")
    if mode == "maximize":
        forms = [(forms[0], forms[1], forms[2], None)]
    elif mode != "feasibility":
        raise ValueError(f"unknown mode {mode!r}")

    radix = q ** (l_ris - 1 - np.arange(l_ris))
    best_value = -np.inf
    best_idx = None
    for start in range(0, total, chunk):
        ns = np.arange(start, min(start + chunk, total))
        idx = (ns[:, None] // radix[None, :]) % q
        theta = 2.0 * np.pi * idx / q
        vh = np.exp(1j * theta)
        value = None
        for a, b, c, rhs in forms:
            a = np.asarray(a, complex)
            b = np.asarray(b, complex).reshape(-1)
            quad = np.einsum("na,ab,nb->n", vh, a, vh.conj(), optimize=True).real
            val = quad + 2.0 * (vh @ b).real + float(c)
            if rhs is not None:
                val = (val - rhs) / max(1.0, abs(rhs))
            value = val if value is None else np.minimum(value, val)
        k = int(np.argmax(value))
        if value[k] > best_value:
            best_value = float(value[k])
            best_idx = idx[k].copy()
    return best_idx, 2.0 * np.pi * best_idx / q, best_value

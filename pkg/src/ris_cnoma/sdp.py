"""Dense primal-dual interior-point solver for small Hermitian SDPs.

Problems are stated over complex Hermitian blocks

    minimize    sum_b <C_b, X_b>
    subject to  sum_b <A_jb, X_b>  (>= or ==)  b_j,      X_b PSD,

with ``<A, X> = Re tr(A X)``.  Complex blocks are mapped onto the standard
2n x 2n real symmetric embedding ``[[Re, -Im], [Im, Re]]`` (with a 1/2
factor on coefficient matrices so inner products are preserved) and a
single real path-following solver handles everything: Nesterov-Todd
scaling, Mehrotra predictor-corrector steps, inequality slacks as 1x1
blocks.  Dense linear algebra only; intended for block orders up to a few
dozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HERMITIAN_TOL = 1e-12
DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITERS = 200
STEP_FRACTION = 0.98


class SdpContractError(ValueError):
    """Raised when problem data violates the solver contract."""


@dataclass
class SdpConstraint:
    """One scalar linear constraint; ``matrices`` maps block index -> A_jb."""

    matrices: dict
    sense: str
    rhs: float

    def __post_init__(self):
        if self.sense not in (">=", "=="):
            raise SdpContractError(f"unknown constraint sense {self.sense!r}")


@dataclass
class SdpProblem:
    """Block-diagonal SDP in the trace form described in the module docstring."""

    block_dims: list
    costs: list
    constraints: list
    fixed_diag: list | None = None

    def validate(self):
        if len(self.costs) != len(self.block_dims):
            raise SdpContractError("one cost matrix (or None) per block required")
        for b, dim in enumerate(self.block_dims):
            c = self.costs[b]
            if c is not None:
                _check_hermitian(c, dim, f"cost[{b}]")
        for j, con in enumerate(self.constraints):
            for b, a in con.matrices.items():
                _check_hermitian(a, self.block_dims[b], f"A[{j}][{b}]")
        if self.fixed_diag is not None and len(self.fixed_diag) != len(self.block_dims):
            raise SdpContractError("fixed_diag must have one entry per block")


@dataclass
class SdpSolution:
    blocks: list
    y: np.ndarray
    objective: float
    status: str
    gap: float
    pinfeas: float
    dinfeas: float
    iterations: int
    iterates: list = field(default_factory=list)


def _check_hermitian(a, dim, label):
    a = np.asarray(a)
    if a.shape != (dim, dim):
        raise SdpContractError(f"{label} has shape {a.shape}, expected ({dim},{dim})")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.conj().T)) > HERMITIAN_TOL * scale * 10:
        raise SdpContractError(f"{label} is not Hermitian")


def max_eigpair(matrix: np.ndarray) -> tuple:
    """Largest eigenvalue and unit eigenvector of a Hermitian matrix."""
    matrix = np.asarray(matrix)
    scale = max(1.0, float(np.max(np.abs(matrix))))
    if np.max(np.abs(matrix - matrix.conj().T)) > 1e-10 * scale:
        raise SdpContractError("matrix is not Hermitian")
    vals, vecs = np.linalg.eigh(matrix)
    return float(vals[-1]), vecs[:, -1]


def _embed(a: np.ndarray) -> np.ndarray:
    re, im = a.real, a.imag
    return 0.5 * np.block([[re, -im], [im, re]])


def _unembed(x: np.ndarray, n: int) -> np.ndarray:
    re = 0.5 * (x[:n, :n] + x[n:, n:])
    im = 0.5 * (x[n:, :n] - x[:n, n:])
    return re + 1j * im


def _complex_project(x: np.ndarray, n: int) -> np.ndarray:
    """Project a 2n x 2n symmetric matrix onto the complex-embedded subspace.

    For symmetric input the off-diagonal block of the projection is
    antisymmetric, matching the embedding of a Hermitian matrix.
    """
    d = 0.5 * (x[:n, :n] + x[n:, n:])
    o = 0.5 * (x[n:, :n] - x[:n, n:])
    o = 0.5 * (o - o.T)
    return np.block([[d, -o], [o, d]])


def solve_sdp(problem: SdpProblem, tol: float = DEFAULT_TOL,
              max_iters: int = DEFAULT_MAX_ITERS) -> SdpSolution:
    """Solve an SDP; returns a typed status instead of raising on failure.

    ``status`` is one of ``optimal`` (duality gap and scaled residuals below
    ``tol``), ``infeasible`` (Farkas certificate found), ``max_iters`` or
    ``breakdown``.  The per-iterate log carries unscaled primal/dual
    objectives plus the residual correction needed for the weak-duality
    inequality ``pobj - dobj + correction >= 0``.
    """
    problem.validate()
    work = _Workspace(problem)
    return work.run(tol, max_iters)


class _Workspace:
    """Real symmetric standard form plus solver state."""

    def __init__(self, problem: SdpProblem):
        self.problem = problem
        n_user_blocks = len(problem.block_dims)
        self.is_complex = []
        self.dims = []
        for b, dim in enumerate(problem.block_dims):
            cplx = _block_is_complex(problem, b)
            self.is_complex.append(cplx)
            self.dims.append(2 * dim if cplx else dim)

        cons = list(problem.constraints)
        if problem.fixed_diag is not None:
            for b, diag in enumerate(problem.fixed_diag):
                if diag is None:
                    continue
                for i, val in enumerate(np.asarray(diag, float)):
                    e = np.zeros((problem.block_dims[b],) * 2)
                    e[i, i] = 1.0
                    cons.append(SdpConstraint({b: e}, "==", float(val)))
        self.n_ineq = sum(1 for c in cons if c.sense == ">=")

        # slack blocks for inequalities
        slack_of = {}
        for j, c in enumerate(cons):
            if c.sense == ">=":
                slack_of[j] = len(self.dims)
                self.dims.append(1)
                self.is_complex.append(False)

        m = len(cons)
        self.m = m
        self.n_user_blocks = n_user_blocks
        self.nu = sum(self.dims)

        # row scaling by the Frobenius norm of each constraint row
        self.row_scale = np.ones(m)
        rhs = np.zeros(m)
        for j, c in enumerate(cons):
            nrm = np.sqrt(sum(np.linalg.norm(a) ** 2 for a in c.matrices.values()))
            self.row_scale[j] = max(nrm, 1e-12)
            rhs[j] = c.rhs / self.row_scale[j]
        self.x_scale = max(float(np.max(np.abs(rhs))), 1e-12) if m else 1.0
        self.b = rhs / self.x_scale

        # stacked coefficient tensors per block, scaled rows, embedded blocks
        self.A = [np.zeros((m, d, d)) for d in self.dims]
        for j, c in enumerate(cons):
            for b, a in c.matrices.items():
                a = np.asarray(a, complex) / self.row_scale[j]
                self.A[b][j] = _embed(a) if self.is_complex[b] else a.real
            if j in slack_of:
                self.A[slack_of[j]][j, 0, 0] = -1.0

        cost_norm = np.sqrt(sum(
            np.linalg.norm(problem.costs[b]) ** 2
            for b in range(n_user_blocks) if problem.costs[b] is not None))
        self.c_scale = max(cost_norm, 1e-12)
        self.C = []
        for b, d in enumerate(self.dims):
            if b < n_user_blocks and problem.costs[b] is not None:
                c = np.asarray(problem.costs[b], complex) / self.c_scale
                self.C.append(_embed(c) if self.is_complex[b] else c.real)
            else:
                self.C.append(np.zeros((d, d)))

    # -- block-wise linear operators -------------------------------------
    def op_a(self, xs):
        out = np.zeros(self.m)
        for ab, x in zip(self.A, xs):
            out += np.einsum("jab,ab->j", ab, x)
        return out

    def op_at(self, y):
        return [np.einsum("j,jab->ab", y, ab) for ab in self.A]

    # -- main loop --------------------------------------------------------
    def run(self, tol, max_iters):
        dims = self.dims
        xs = [np.eye(d) * 10.0 for d in dims]
        zs = [np.eye(d) * 10.0 for d in dims]
        y = np.zeros(self.m)

        b_norm = 1.0 + np.linalg.norm(self.b)
        c_norm = 1.0 + np.sqrt(sum(np.linalg.norm(c) ** 2 for c in self.C))
        iterates = []
        status = "max_iters"
        relgap = pinf = dinf = np.inf
        progress = []
        it = 0
        for it in range(max_iters + 1):
            r_p = self.b - self.op_a(xs)
            aty = self.op_at(y)
            r_d = [c - z - a for c, z, a in zip(self.C, zs, aty)]
            gap = sum(np.vdot(x, z).real for x, z in zip(xs, zs))
            mu = gap / self.nu
            pobj = sum(np.vdot(c, x).real for c, x in zip(self.C, xs))
            dobj = float(self.b @ y)
            pinf = np.linalg.norm(r_p) / b_norm
            dinf = np.sqrt(sum(np.linalg.norm(r) ** 2 for r in r_d)) / c_norm
            relgap = gap / (1.0 + abs(pobj) + abs(dobj))
            unscale = self.c_scale * self.x_scale
            iterates.append({
                "pobj": pobj * unscale,
                "dobj": dobj * unscale,
                "xz_gap": gap * unscale,
                "pinfeas": pinf,
                "dinfeas": dinf,
                "correction": unscale * (
                    np.linalg.norm(r_p) * np.linalg.norm(y)
                    + np.sqrt(sum(np.linalg.norm(r) ** 2 for r in r_d))
                    * np.sqrt(sum(np.linalg.norm(x) ** 2 for x in xs))),
            })
            if relgap <= tol and pinf <= tol and dinf <= tol:
                status = "optimal"
                break
            if self._farkas_infeasible(y):
                status = "infeasible"
                break
            if not np.isfinite(mu) or mu > 1e16:
                status = "breakdown"
                break
            # stalled: residuals stopped improving (empty-interior problems)
            progress.append(max(relgap, pinf, dinf))
            if len(progress) > 25 and progress[-1] > 0.995 * min(progress[:-25]):
                break
            if it == max_iters:
                break

            try:
                step = self._direction(xs, zs, y, r_p, r_d, mu)
            except np.linalg.LinAlgError:
                step = None
            if step is None:
                # lift the iterate slightly off the cone boundary and retry
                lift = [1e-12 * (1.0 + np.trace(x) / d) * np.eye(d)
                        for x, d in zip(xs, dims)]
                try:
                    step = self._direction(
                        [x + e for x, e in zip(xs, lift)],
                        [z + e for z, e in zip(zs, lift)], y, r_p, r_d, mu)
                except np.linalg.LinAlgError:
                    step = None
                if step is None:
                    status = "breakdown"
                    break
            dxs, dy, dzs, alpha_p, alpha_d = step
            for b in range(len(dims)):
                xs[b] = xs[b] + alpha_p * dxs[b]
                zs[b] = zs[b] + alpha_d * dzs[b]
                xs[b] = 0.5 * (xs[b] + xs[b].T)
                zs[b] = 0.5 * (zs[b] + zs[b].T)
                if self.is_complex[b]:
                    n = dims[b] // 2
                    xs[b] = _complex_project(xs[b], n)
                    zs[b] = _complex_project(zs[b], n)
            y = y + alpha_d * dy

        return self._finish(xs, y, status, iterates, it, relgap, pinf, dinf)

    def _direction(self, xs, zs, y, r_p, r_d, mu):
        dims = self.dims
        ls = [np.linalg.cholesky(x) for x in xs]
        rs = [np.linalg.cholesky(z) for z in zs]
        ws = []
        for l, r in zip(ls, rs):
            u, s, vt = np.linalg.svd(r.T @ l)
            if np.min(s) <= 0:
                return None
            g = l @ vt.T / np.sqrt(s)
            ws.append(g @ g.T)

        m = self.m
        mat = np.zeros((m, m))
        waw = []
        for ab, w in zip(self.A, ws):
            t = np.einsum("ab,jbc,cd->jad", w, ab, w, optimize=True)
            waw.append(t)
            mat += np.einsum("jab,kab->jk", t, ab, optimize=True)
        mat += np.eye(m) * (1e-13 * (1.0 + np.trace(mat) / m))
        try:
            mfac = np.linalg.cholesky(mat)
        except np.linalg.LinAlgError:
            mat += np.eye(m) * (1e-8 * (1.0 + np.trace(mat) / m))
            mfac = np.linalg.cholesky(mat)

        zinvs = [np.linalg.inv(z) for z in zs]

        def solve_direction(rc):
            rhs = r_p - self.op_a(rc)
            for t, r in zip(waw, r_d):
                rhs += np.einsum("jab,ab->j", t, r)
            dy = _chol_solve(mfac, rhs)
            dy += _chol_solve(mfac, rhs - mat @ dy)  # one refinement step
            dzs = [r - np.einsum("j,jab->ab", dy, ab)
                   for r, ab in zip(r_d, self.A)]
            dxs = [rc_b - w @ dz @ w for rc_b, w, dz in zip(rc, ws, dzs)]
            dxs = [0.5 * (d + d.T) for d in dxs]
            dzs = [0.5 * (d + d.T) for d in dzs]
            return dxs, dy, dzs

        # predictor (affine direction)
        rc_aff = [-x for x in xs]
        dxa, dya, dza = solve_direction(rc_aff)
        ap = min(1.0, _max_step(xs, dxa, ls))
        ad = min(1.0, _max_step(zs, dza, rs))
        gap_aff = sum(
            np.vdot(x + ap * dx, z + ad * dz).real
            for x, dx, z, dz in zip(xs, dxa, zs, dza))
        sigma = min(1.0, max(1e-8, (gap_aff / (mu * self.nu)) ** 3))

        # corrector; the second-order term is weighted by the realized
        # affine step so a truncated predictor degenerates into a pure
        # centering step instead of poisoning the direction
        weight = ap * ad
        rc = []
        for x, zi, dx, dz in zip(xs, zinvs, dxa, dza):
            t = dx @ dz @ zi
            rc.append(sigma * mu * zi - x - 0.5 * weight * (t + t.T))
        dxs, dy, dzs = solve_direction(rc)
        alpha_p = min(1.0, STEP_FRACTION * _max_step(xs, dxs, ls))
        alpha_d = min(1.0, STEP_FRACTION * _max_step(zs, dzs, rs))
        return dxs, dy, dzs, alpha_p, alpha_d

    def _farkas_infeasible(self, y):
        ynorm = np.linalg.norm(y)
        if ynorm < 1e5 * (1.0 + np.linalg.norm(self.b)):
            return False
        yn = y / ynorm
        if self.b @ yn <= 1e-8:
            return False
        for ab in self.A:
            s = -np.einsum("j,jab->ab", yn, ab)
            lam = np.linalg.eigvalsh(0.5 * (s + s.T))[0]
            if lam < -1e-8 * max(1.0, np.linalg.norm(s)):
                return False
        return True

    def _finish(self, xs, y, status, iterates, it, relgap, pinf, dinf):
        blocks = []
        for b in range(self.n_user_blocks):
            x = xs[b] * self.x_scale
            if self.is_complex[b]:
                blocks.append(_unembed(x, self.problem.block_dims[b]))
            else:
                blocks.append(x)
        objective = 0.0
        for b, c in enumerate(self.problem.costs):
            if c is not None:
                objective += np.vdot(np.asarray(c, complex), blocks[b]).real
        y_orig = y[:len(self.problem.constraints)] * self.c_scale \
            / self.row_scale[:len(self.problem.constraints)]
        return SdpSolution(
            blocks=blocks,
            y=y_orig,
            objective=float(objective),
            status=status,
            gap=float(relgap),
            pinfeas=float(pinf),
            dinfeas=float(dinf),
            iterations=it,
            iterates=iterates,
        )


def _block_is_complex(problem: SdpProblem, b: int) -> bool:
    mats = [problem.costs[b]] if problem.costs[b] is not None else []
    mats += [c.matrices[b] for c in problem.constraints if b in c.matrices]
    return any(np.iscomplexobj(np.asarray(m)) and np.max(np.abs(np.asarray(m).imag)) > 0
               for m in mats)


def _chol_solve(l, rhs):
    return np.linalg.solve(l.T, np.linalg.solve(l, rhs))


def _max_step(mats, deltas, chols) -> float:
    """Largest alpha with mat + alpha*delta staying PSD, over all blocks."""
    alpha = np.inf
    for m, d, l in zip(mats, deltas, chols):
        linv_d = np.linalg.solve(l, d)
        sym = np.linalg.solve(l, linv_d.T)
        lam = np.linalg.eigvalsh(0.5 * (sym + sym.T))[0]
        if lam < 0:
            alpha = min(alpha, -1.0 / lam)
    return float(alpha)


def dump_sdp_problem(problem: SdpProblem) -> str:
    """Sparse triplet dump for cross-checking against external solvers."""
    lines = ["blocks " + " ".join(str(d) for d in problem.block_dims)]
    for b, c in enumerate(problem.costs):
        if c is None:
            continue
        for (i, j), v in np.ndenumerate(np.asarray(c, complex)):
            if j >= i and v != 0:
                lines.append(f"cost {b} {i} {j} {v.real:.17g} {v.imag:.17g}")
    for k, con in enumerate(problem.constraints):
        lines.append(f"con {k} {con.sense} {con.rhs:.17g}")
        for b, a in sorted(con.matrices.items()):
            for (i, j), v in np.ndenumerate(np.asarray(a, complex)):
                if j >= i and v != 0:
                    lines.append(f"A {k} {b} {i} {j} {v.real:.17g} {v.imag:.17g}")
    if problem.fixed_diag is not None:
        for b, diag in enumerate(problem.fixed_diag):
            if diag is not None:
                vals = " ".join(f"{v:.17g}" for v in np.asarray(diag, float))
                lines.append(f"fixdiag {b} {vals}")
    return "\n".join(lines) + "\n"

"""Typed failure modes shared by the stage solvers."""


class StageInfeasible(RuntimeError):
    """A stage subproblem has no feasible point for the current iterate."""

    def __init__(self, stage: str, detail: str = ""):
        self.stage = stage
        super().__init__(f"{stage} subproblem infeasible" + (f": {detail}" if detail else ""))


class UncoverableError(RuntimeError):
    """Weak user cannot be served: DT SINR below target and zero relay channel."""

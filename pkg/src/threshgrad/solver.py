"""Forward-backward (thresholding gradient) iteration with trace recording.

The iteration is

    x^{n+1} = prox_{lam*g}(x^n - lam*grad_h(x^n)),   lam in (0, 2/L),

stopped when the fixed-point residual ||x - fb_step(x)|| / lam falls below a
tolerance.  Supports are recorded as exact index sets: the soft-thresholder
produces exact zeros, so support identification is observable without any
magnitude heuristics.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .regularizers import SeparableRegularizer, g_value, prox_separable

__all__ = [
    "Problem",
    "SolverConfig",
    "IterateTrace",
    "fb_step",
    "run",
    "fixed_point_residual",
    "fejer_check",
    "write_trace_csv",
]

# past this many recorded rows, exact support sets are dropped and only
# sizes are kept; identification audits need the exact sets
SUPPORT_STORE_LIMIT = 1_000_000


@dataclass(frozen=True, eq=False)
class Problem:
    """min f = g + h with separable g and smooth h.

    ``h`` must expose ``value(x)``, ``gradient(x)`` and ``lipschitz``; a
    `LeastSquaresTerm` does, and any other smooth oracle with the same
    surface works too.
    """

    g: SeparableRegularizer
    h: object

    def __post_init__(self):
        hn = getattr(getattr(self.h, "op", None), "shape", (None, self.g.n))[1]
        if hn != self.g.n:
            raise ValueError(
                f"dimension mismatch: regularizer has {self.g.n} coordinates, "
                f"smooth term expects {hn}"
            )

    @property
    def n(self) -> int:
        return self.g.n

    def objective(self, x: np.ndarray) -> float:
        return float(self.h.value(x)) + g_value(x, self.g)


@dataclass
class SolverConfig:
    """Step size, budget and recording policy for one run.

    ``lam=None`` resolves to 1/L at run start (center of the safe range with
    the classical descent constant).  ``x0=None`` starts from zero.
    """

    lam: Optional[float] = None
    max_iter: int = 100_000
    residual_tol: float = 1e-10
    record_every: int = 1
    x0: Optional[np.ndarray] = None

    def resolve(self, problem: Problem) -> tuple[float, np.ndarray]:
        L = float(problem.h.lipschitz)
        lam = 1.0 / L if self.lam is None else float(self.lam)
        if not 0.0 < lam < 2.0 / L:
            raise ValueError(
                f"step lam={lam} outside the admissible range (0, {2.0 / L}) "
                f"for L={L}"
            )
        x0 = np.zeros(problem.n) if self.x0 is None else np.asarray(self.x0, float)
        if x0.shape != (problem.n,):
            raise ValueError(f"x0 must have shape ({problem.n},), got {x0.shape}")
        if not np.all(np.isfinite(x0)):
            raise ValueError("x0 must be finite")
        if self.max_iter < 0 or self.record_every < 1 or self.residual_tol < 0:
            raise ValueError("invalid solver budget")
        return lam, x0


@dataclass(eq=False)
class IterateTrace:
    """Per-iteration record of one forward-backward run.

    supports hold exact index tuples (or None past SUPPORT_STORE_LIMIT);
    dists are distances to the reference point when one was supplied.
    """

    ns: np.ndarray
    objectives: np.ndarray
    residuals: np.ndarray
    supports: list
    supp_sizes: np.ndarray
    dists: Optional[np.ndarray]
    x_final: np.ndarray
    x0: np.ndarray
    lam: float
    converged: bool
    n_iterations: int
    final_residual: float
    record_every: int
    wall_time: float
    reference: Optional[np.ndarray] = None
    iterates: Optional[list] = None

    def check_descent(self, slack: float = 1e-12) -> bool:
        """Objective nonincreasing along recorded rows, up to ``slack``."""
        d = np.diff(self.objectives)
        return bool(np.all(d <= slack))


def fb_step(problem: Problem, lam: float, x: np.ndarray) -> np.ndarray:
    """One forward-backward step prox_{lam*g}(x - lam*grad_h(x))."""
    grad = problem.h.gradient(x)
    if not np.all(np.isfinite(grad)):
        raise RuntimeError("non-finite gradient; check problem data")
    return prox_separable(x - lam * grad, lam, problem.g)


def fixed_point_residual(problem: Problem, lam: float, x: np.ndarray) -> float:
    """||x - fb_step(x)|| / lam; vanishes exactly at minimizers."""
    return float(np.linalg.norm(x - fb_step(problem, lam, x))) / lam


def _support_tuple(x: np.ndarray) -> tuple:
    return tuple(int(k) for k in np.flatnonzero(x))


def run(
    problem: Problem,
    config: SolverConfig,
    reference: Optional[np.ndarray] = None,
    keep_iterates: bool = False,
) -> IterateTrace:
    """Iterate fb_step until the fixed-point residual drops below tolerance
    or the budget is exhausted.

    Returns the first iterate whose own residual is below tolerance, so the
    residual reported for the final point is genuinely its fixed-point
    residual.  Rows are recorded every ``record_every`` iterations plus
    always the final one.
    """
    lam, x = config.resolve(problem)
    x0 = x.copy()
    if reference is not None:
        reference = np.asarray(reference, dtype=float)
        if reference.shape != (problem.n,):
            raise ValueError("reference shape mismatch")
    t0 = time.perf_counter()
    ns: list = []
    objectives: list = []
    residuals: list = []
    supports: list = []
    supp_sizes: list = []
    dists: list = []
    iterates: list = []

    def record(n, x, res):
        ns.append(n)
        objectives.append(problem.objective(x))
        residuals.append(res)
        supp = _support_tuple(x)
        supp_sizes.append(len(supp))
        supports.append(supp if len(supports) < SUPPORT_STORE_LIMIT else None)
        if reference is not None:
            dists.append(float(np.linalg.norm(x - reference)))
        if keep_iterates:
            iterates.append(x.copy())

    converged = False
    n = 0
    while True:
        x_next = fb_step(problem, lam, x)
        if not np.all(np.isfinite(x_next)):
            raise RuntimeError(f"non-finite iterate at iteration {n}")
        res = float(np.linalg.norm(x - x_next)) / lam
        if n % config.record_every == 0:
            record(n, x, res)
        if res <= config.residual_tol:
            converged = True
            break
        if n >= config.max_iter:
            break
        x = x_next
        n += 1
    if ns[-1] != n:  # always include the final iterate
        record(n, x, res)

    return IterateTrace(
        ns=np.array(ns, dtype=np.int64),
        objectives=np.array(objectives, dtype=float),
        residuals=np.array(residuals, dtype=float),
        supports=supports,
        supp_sizes=np.array(supp_sizes, dtype=np.int64),
        dists=np.array(dists, dtype=float) if reference is not None else None,
        x_final=x.copy(),
        x0=x0,
        lam=lam,
        converged=converged,
        n_iterations=n,
        final_residual=res,
        record_every=config.record_every,
        wall_time=time.perf_counter() - t0,
        reference=reference,
        iterates=iterates if keep_iterates else None,
    )


def fejer_check(
    trace: IterateTrace, reference: np.ndarray, slack: float = 1e-10
) -> bool:
    """Whether ||x^{n+1} - ref|| <= ||x^n - ref|| + slack along the trace.

    Needs record_every = 1 (sparse recordings cannot certify monotonicity)
    and either kept iterates or distances recorded against the same
    reference.
    """
    if trace.record_every != 1:
        raise ValueError("fejer_check needs a trace recorded with record_every=1")
    reference = np.asarray(reference, dtype=float)
    if trace.iterates is not None:
        d = np.array([np.linalg.norm(x - reference) for x in trace.iterates])
    elif trace.dists is not None:
        if trace.reference is None or not np.array_equal(trace.reference, reference):
            raise ValueError(
                "trace distances were recorded against a different reference"
            )
        d = trace.dists
    else:
        raise ValueError("trace carries neither iterates nor distances")
    return bool(np.all(np.diff(d) <= slack))


def write_trace_csv(trace: IterateTrace, path, f_star: float) -> None:
    """CSV columns (n, f_gap, residual, supp_size, dist_to_ref).

    Floats are written with shortest round-trip repr, so identical runs
    produce byte-identical files.
    """
    lines = ["n,f_gap,residual,supp_size,dist_to_ref"]
    have_d = trace.dists is not None
    for i in range(len(trace.ns)):
        d = repr(float(trace.dists[i])) if have_d else ""
        lines.append(
            f"{int(trace.ns[i])},{repr(float(trace.objectives[i] - f_star))},"
            f"{repr(float(trace.residuals[i]))},{int(trace.supp_sizes[i])},{d}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

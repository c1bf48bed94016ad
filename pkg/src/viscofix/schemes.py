"""Implicit viscosity iteration for fixed points of nonexpansive maps.

Outer loop: for a strictly decreasing eps schedule, solve the implicit step

    xi_n = eps_n * f(xi_n) + (1 - eps_n) * T_n(xi_n)

where f is a contraction and T_n is a fixed nonexpansive operator or a member
of an operator family cycled round-robin over its sampled indices. Each step
is a Banach fixed-point problem for the blended map G, a contraction with
modulus at most q = 1 - eps_n * (1 - alpha), and is solved by Picard
iteration with an a-posteriori stopping rule. The anchored variant freezes
f to a constant anchor and uses eps_n = 1/n, which selects the value of the
limiting retraction at that anchor.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .operators import (
    ConstantOperator,
    DeclaredWrapper,
    NONEXPANSIVE,
    NotNonexpansive,
    Operator,
    blend,
    check_nonexpansive,
    contraction,
    estimate_lipschitz,
)
from .semigroup import OperatorFamily
from .space import (
    DEFAULT_POLICY,
    DimensionMismatch,
    TolerancePolicy,
    ViscofixError,
    as_vector,
    norm,
)
from .trace import ConvergenceTrace, TraceStep


class InvalidSchedule(ViscofixError):
    """Schedule values outside (0, 1) or otherwise malformed."""


class NonDecreasingSchedule(InvalidSchedule):
    """Schedule values fail to decrease strictly."""


class NotAContraction(ViscofixError):
    """Picard iteration needs a contraction modulus strictly below 1."""


class MaxIterExceeded(ViscofixError):
    """The inner iteration budget ran out before the stopping rule fired."""


#: Sampling used when a Lipschitz class has to be estimated on the fly.
PROBE_SAMPLES = 1000
PROBE_RADIUS = 10.0
#: Estimated moduli must stay below 1 by this margin to count as contractions.
CONTRACTION_MARGIN = 1e-6
#: Slack allowed when probing an undeclared target for nonexpansiveness.
FAMILY_NONEXPANSIVE_TOL = 1e-9

#: Affine inner problems of at most this dimension run on plain floats.
_FAST_PATH_MAX_DIM = 4


# ---------------------------------------------------------------------------
# Schedules


@dataclass(frozen=True)
class EpsilonSchedule:
    """Materialized sequence eps_1 > eps_2 > ... inside (0, 1)."""

    kind: str
    n_max: int
    values: tuple[float, ...]
    params: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def eps(self, n: int) -> float:
        return self.values[n - 1]


def _validate_schedule_values(values) -> tuple[float, ...]:
    values = tuple(float(v) for v in values)
    if not values:
        raise InvalidSchedule("schedule is empty")
    for v in values:
        if not 0.0 < v < 1.0:
            raise InvalidSchedule(f"schedule values must lie in (0, 1), got {v}")
    for a, b in zip(values, values[1:]):
        if b >= a:
            raise NonDecreasingSchedule("schedule not strictly decreasing")
    return values


def make_schedule(kind: str = "harmonic", params: dict | None = None, n_max: int | None = None) -> EpsilonSchedule:
    """Build and validate an eps schedule.

    Kinds: "harmonic" (eps_n = 1/(n+1)^p), "geometric" (eps_n = r^n), and
    "explicit" (a literal value list in params["values"]).
    """
    params = dict(params or {})
    if kind == "explicit":
        raw = params.get("values")
        if raw is None:
            raise InvalidSchedule("explicit schedule needs params['values']")
        values = _validate_schedule_values(raw)
        if n_max is not None and n_max != len(values):
            raise InvalidSchedule(
                f"explicit schedule has {len(values)} values but n_max={n_max}"
            )
        return EpsilonSchedule(kind="explicit", n_max=len(values), values=values, params={})
    if n_max is None:
        n_max = 200
    n_max = int(n_max)
    if n_max < 1:
        raise InvalidSchedule("n_max must be at least 1")
    if kind == "harmonic":
        p = float(params.get("p", 1.0))
        if not p > 0.0:
            raise InvalidSchedule(f"harmonic exponent must be positive, got {p}")
        values = tuple(1.0 / (n + 1) ** p for n in range(1, n_max + 1))
        return EpsilonSchedule(kind="harmonic", n_max=n_max, values=_validate_schedule_values(values), params={"p": p})
    if kind == "geometric":
        r = float(params.get("r", 0.5))
        if not 0.0 < r < 1.0:
            raise InvalidSchedule(f"geometric ratio must lie in (0, 1), got {r}")
        values = tuple(r**n for n in range(1, n_max + 1))
        return EpsilonSchedule(kind="geometric", n_max=n_max, values=_validate_schedule_values(values), params={"r": r})
    raise InvalidSchedule(f"unknown schedule kind '{kind}'")


# ---------------------------------------------------------------------------
# Options and results


@dataclass(frozen=True)
class InnerTolRule:
    """Inner tolerance per outer step: fixed delta, or min(outer_tol, c*eps^2)."""

    kind: str = "coupled"  # "fixed" | "coupled"
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in ("fixed", "coupled"):
            raise ValueError(f"unknown inner tolerance rule '{self.kind}'")
        if not self.value > 0.0:
            raise ValueError("inner tolerance rule constant must be positive")

    def delta(self, eps: float, outer_tol: float) -> float:
        if self.kind == "fixed":
            return self.value
        return min(outer_tol, self.value * eps * eps)


def fixed_inner_tol(delta: float) -> InnerTolRule:
    return InnerTolRule("fixed", delta)


def coupled_inner_tol(c: float = 1.0) -> InnerTolRule:
    return InnerTolRule("coupled", c)


@dataclass(frozen=True)
class SolveOptions:
    """Knobs shared by the outer solvers."""

    outer_tol: float = 1e-8
    inner_tol_rule: InnerTolRule = InnerTolRule()
    warm_start: bool = True
    policy: TolerancePolicy = DEFAULT_POLICY

    def __post_init__(self):
        if not self.outer_tol > 0.0:
            raise ValueError("outer_tol must be positive")


@dataclass(frozen=True)
class FixedPointResult:
    """Outcome of a fixed-point solve.

    For picard_solve, residual is the a-posteriori bound on the distance to
    the true fixed point and step_norms holds every ||x_{k+1} - x_k||. For
    the outer solvers, residual is the final fixed-point residual
    ||xi_N - T(xi_N)|| and iterations counts outer steps.
    """

    point: np.ndarray
    residual: float
    iterations: int
    converged: bool
    step_norms: tuple[float, ...] = ()


# ---------------------------------------------------------------------------
# Inner solver


def _resolve_contraction(G: Operator) -> float:
    """Contraction modulus of G: declared, or estimated within the margin."""
    declared = G.declared_class
    if declared.kind == "contraction":
        return declared.alpha
    if declared.kind == "unknown":
        estimate = estimate_lipschitz(G, PROBE_SAMPLES, PROBE_RADIUS)
        if estimate <= 1.0 - CONTRACTION_MARGIN:
            return estimate
        raise NotAContraction(
            f"estimated Lipschitz constant {estimate:.6g} is not below 1 - {CONTRACTION_MARGIN}"
        )
    raise NotAContraction(f"operator declared '{declared.kind}' has Lipschitz bound 1")


def _picard_affine_small(matrix, offset, x0, threshold, max_iter):
    """Picard loop for low-dimensional affine maps on plain floats.

    Semantically identical to the generic loop (same stopping rule, same
    iteration counts); it exists because tight inner loops dominate the run
    time of long outer schedules.
    """
    d = x0.shape[0]
    steps: list[float] = []
    if d == 1:
        m = float(matrix[0, 0])
        b = float(offset[0])
        x = float(x0[0])
        for k in range(1, max_iter + 1):
            y = m * x + b
            delta = abs(y - x)
            steps.append(delta)
            x = y
            if delta <= threshold:
                return np.array([x]), k, steps
        return None
    if d == 2:
        m00 = float(matrix[0, 0])
        m01 = float(matrix[0, 1])
        m10 = float(matrix[1, 0])
        m11 = float(matrix[1, 1])
        b0 = float(offset[0])
        b1 = float(offset[1])
        xa = float(x0[0])
        xb = float(x0[1])
        for k in range(1, max_iter + 1):
            ya = m00 * xa + m01 * xb + b0
            yb = m10 * xa + m11 * xb + b1
            da = ya - xa
            db = yb - xb
            delta = math.sqrt(da * da + db * db)
            steps.append(delta)
            xa = ya
            xb = yb
            if delta <= threshold:
                return np.array([xa, xb]), k, steps
        return None
    rows = [[float(v) for v in row] for row in matrix]
    bias = [float(v) for v in offset]
    x = [float(v) for v in x0]
    idx = range(d)
    for k in range(1, max_iter + 1):
        y = [sum(rows[i][j] * x[j] for j in idx) + bias[i] for i in idx]
        delta = math.sqrt(sum((y[i] - x[i]) ** 2 for i in idx))
        steps.append(delta)
        x = y
        if delta <= threshold:
            return np.array(x), k, steps
    return None


def picard_solve(
    G: Operator, x0, tol: float, policy: TolerancePolicy = DEFAULT_POLICY
) -> FixedPointResult:
    """Banach-Picard iteration x_{k+1} = G(x_k) for a contraction G.

    Parameters
    ----------
    G : Operator
        Declared contraction, or an operator whose sampled Lipschitz estimate
        stays below 1 - 1e-6.
    x0 : array_like
        Starting point.
    tol : float
        Target bound on the distance to the fixed point. With modulus
        alpha > 0 the loop stops once ||x_{k+1} - x_k|| <= tol*(1-alpha)/alpha,
        which guarantees ||x_k - x*|| <= tol; modulus 0 returns after one
        application, which already sits on the fixed point.
    policy : TolerancePolicy
        Supplies the iteration budget.

    Returns
    -------
    FixedPointResult
        residual carries the a-posteriori error bound, step_norms the full
        sequence of update norms.
    """
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    alpha = _resolve_contraction(G)
    x = np.asarray(x0, dtype=float)
    if x.shape != (G.dim,):
        raise DimensionMismatch(f"start point shape {x.shape} does not match dimension {G.dim}")
    if alpha == 0.0:
        # Modulus 0 means one application lands on the fixed point exactly.
        nxt = G.apply(x)
        return FixedPointResult(
            point=as_vector(nxt),
            residual=0.0,
            iterations=1,
            converged=True,
            step_norms=(norm(nxt - x),),
        )
    threshold = tol * (1.0 - alpha) / alpha

    parts = G.affine_parts()
    if parts is not None and G.dim <= _FAST_PATH_MAX_DIM:
        outcome = _picard_affine_small(parts[0], parts[1], x, threshold, policy.max_iter)
        if outcome is not None:
            point, iterations, steps = outcome
            bound = steps[-1] * alpha / (1.0 - alpha)
            return FixedPointResult(
                point=as_vector(point),
                residual=bound,
                iterations=iterations,
                converged=True,
                step_norms=tuple(steps),
            )
    else:
        steps = []
        current = x.copy()
        for k in range(1, policy.max_iter + 1):
            nxt = G.apply(current)
            delta = norm(nxt - current)
            steps.append(delta)
            current = nxt
            if delta <= threshold:
                bound = delta * alpha / (1.0 - alpha)
                return FixedPointResult(
                    point=as_vector(current),
                    residual=bound,
                    iterations=k,
                    converged=True,
                    step_norms=tuple(steps),
                )
    raise MaxIterExceeded(
        f"Picard iteration hit the budget of {policy.max_iter} steps before reaching "
        f"tol={tol:.3g} (contraction modulus q={alpha:.12g})"
    )


def implicit_step(
    f: Operator, T: Operator, eps: float, warm, inner_tol: float,
    policy: TolerancePolicy = DEFAULT_POLICY,
) -> np.ndarray:
    """Solve xi = eps*f(xi) + (1-eps)*T(xi) to within inner_tol.

    The blended map is a contraction with modulus at most
    q = eps*alpha + (1-eps) and is solved by picard_solve from the warm
    start. eps = 1 is allowed (the anchored scheme starts there) and reduces
    the equation to xi = f(xi).
    """
    eps = float(eps)
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    g = blend(eps, f, 1.0 - eps, T)
    return picard_solve(g, warm, inner_tol, policy).point


# ---------------------------------------------------------------------------
# Outer solvers


def _resolve_nonexpansive(T: Operator) -> Operator:
    """Pass through maps with Lipschitz bound <= 1; probe unknown ones once."""
    bound = T.declared_class.lipschitz_bound()
    if bound is not None and bound <= 1.0:
        return T
    result = check_nonexpansive(T, PROBE_SAMPLES, FAMILY_NONEXPANSIVE_TOL)
    if result.passed:
        return DeclaredWrapper(T, NONEXPANSIVE)
    _, _, ratio = result.witness
    raise NotNonexpansive(f"target operator expands sampled pairs (worst ratio {ratio:.6g})")


def _resolve_contraction_operator(f: Operator) -> Operator:
    if f.declared_class.kind == "contraction":
        return f
    if f.declared_class.kind == "unknown":
        estimate = estimate_lipschitz(f, PROBE_SAMPLES, PROBE_RADIUS)
        if estimate <= 1.0 - CONTRACTION_MARGIN:
            return DeclaredWrapper(f, contraction(estimate))
    raise NotAContraction(
        f"forcing term must be a contraction; declared class is '{f.declared_class.kind}'"
    )


def _step_operator_provider(target, dim: int):
    """Resolve the per-step operator source; returns (provider, step_count_hint)."""
    if isinstance(target, OperatorFamily):
        if target.dim != dim:
            raise DimensionMismatch(
                f"family dimension {target.dim} does not match forcing dimension {dim}"
            )
        indices = tuple(target.sample_indices())
        cache = [_resolve_nonexpansive(target.evaluate(t)) for t in indices]

        def provider(idx: int) -> Operator:
            return cache[idx % len(cache)]

        return provider
    if isinstance(target, Operator):
        if target.dim != dim:
            raise DimensionMismatch(
                f"operator dimension {target.dim} does not match forcing dimension {dim}"
            )
        resolved = _resolve_nonexpansive(target)

        def provider(idx: int) -> Operator:
            return resolved

        return provider
    raise TypeError(f"target must be an Operator or OperatorFamily, got {type(target).__name__}")


def _run_implicit(f, provider, eps_values, opts, metadata, inner_monitor):
    dim = f.dim
    origin = np.zeros(dim)
    x_prev = origin
    trace = ConvergenceTrace(metadata=metadata)
    started = time.time()
    converged = False
    fix_res = float("inf")
    for idx, eps in enumerate(eps_values):
        n = idx + 1
        step_T = provider(idx)
        delta_n = opts.inner_tol_rule.delta(eps, opts.outer_tol)
        warm = x_prev if opts.warm_start else origin
        g = blend(eps, f, 1.0 - eps, step_T)
        res = picard_solve(g, warm, delta_n, opts.policy)
        xi = np.asarray(res.point, dtype=float)
        implicit_res = norm(xi - g.apply(xi))
        fix_res = norm(xi - step_T.apply(xi))
        step_delta = norm(xi - x_prev)
        trace.append(
            TraceStep(
                n=n,
                eps=float(eps),
                point=tuple(float(c) for c in xi),
                implicit_residual=implicit_res,
                fix_residual=fix_res,
                inner_iters=res.iterations,
                step_delta=step_delta,
            )
        )
        if inner_monitor is not None:
            inner_monitor(n, float(eps), res)
        x_prev = xi
        if fix_res <= opts.outer_tol and step_delta <= opts.outer_tol:
            converged = True
            break
    trace.metadata["timestamps"] = {"started": started, "finished": time.time()}
    result = FixedPointResult(
        point=as_vector(x_prev),
        residual=float(fix_res),
        iterations=len(trace.steps),
        converged=converged,
    )
    return result, trace


def viscosity_implicit_solve(
    f: Operator,
    target,
    schedule: EpsilonSchedule,
    opts: SolveOptions | None = None,
    problem_id: str | None = None,
    inner_monitor=None,
) -> tuple[FixedPointResult, ConvergenceTrace]:
    """Implicit viscosity iteration along an eps schedule.

    Parameters
    ----------
    f : Operator
        Contraction forcing term (declared, or estimable below 1 - 1e-6).
    target : Operator or OperatorFamily
        Nonexpansive target map; a family is cycled round-robin over its
        sampled indices, one index per outer step.
    schedule : EpsilonSchedule
        Strictly decreasing eps values in (0, 1).
    opts : SolveOptions
        Tolerances, inner rule, warm-start switch.
    inner_monitor : callable, optional
        Called as inner_monitor(n, eps, picard_result) after every outer step.

    Returns
    -------
    (FixedPointResult, ConvergenceTrace)
        The result's converged flag means the final step met both
        ||xi - T(xi)|| <= outer_tol and ||xi_n - xi_{n-1}|| <= outer_tol.
    """
    opts = opts or SolveOptions()
    if not isinstance(schedule, EpsilonSchedule):
        raise InvalidSchedule("schedule must be an EpsilonSchedule (see make_schedule)")
    _validate_schedule_values(schedule.values)
    f = _resolve_contraction_operator(f)
    provider = _step_operator_provider(target, f.dim)
    metadata = {
        "problem_id": problem_id,
        "schedule": schedule.kind,
        "seed": None,
    }
    return _run_implicit(f, provider, schedule.values, opts, metadata, inner_monitor)


def anchored_implicit_solve(
    anchor,
    target,
    n_max: int = 200,
    opts: SolveOptions | None = None,
    problem_id: str | None = None,
    inner_monitor=None,
) -> tuple[FixedPointResult, ConvergenceTrace]:
    """Anchored implicit iteration xi_n = (1/n) x + (1 - 1/n) T(xi_n).

    The forcing term is the constant anchor x, so the limit of xi_n is the
    value at x of the nonexpansive retraction onto the fixed-point set. The
    first step has eps = 1 and returns the anchor itself.
    """
    anchor = as_vector(anchor)
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    f = ConstantOperator(anchor)
    provider = _step_operator_provider(target, f.dim)
    eps_values = tuple(1.0 / n for n in range(1, n_max + 1))
    opts = opts or SolveOptions()
    metadata = {
        "problem_id": problem_id,
        "schedule": "anchored(1/n)",
        "seed": None,
    }
    return _run_implicit(f, provider, eps_values, opts, metadata, inner_monitor)


@dataclass
class RetractionValues:
    """Anchored limits per anchor, with per-anchor failures kept separate."""

    limits: dict[tuple[float, ...], np.ndarray]
    results: dict[tuple[float, ...], FixedPointResult]
    failures: dict[tuple[float, ...], str]


def retraction_eval(
    T, anchors, n_max: int = 200, opts: SolveOptions | None = None
) -> RetractionValues:
    """Evaluate the limiting retraction at each anchor via anchored solves.

    Solver errors are reported per anchor in .failures instead of aborting
    the whole sweep.
    """
    limits: dict[tuple[float, ...], np.ndarray] = {}
    results: dict[tuple[float, ...], FixedPointResult] = {}
    failures: dict[tuple[float, ...], str] = {}
    for anchor in anchors:
        key = tuple(float(c) for c in np.asarray(anchor, dtype=float))
        try:
            res, _ = anchored_implicit_solve(anchor, T, n_max=n_max, opts=opts)
        except ViscofixError as exc:
            failures[key] = f"{type(exc).__name__}: {exc}"
            continue
        limits[key] = res.point
        results[key] = res
    return RetractionValues(limits=limits, results=results, failures=failures)

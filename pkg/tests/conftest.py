"""Shared fixtures: the three reference problems, each solved once per session."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import pytest

from viscofix import (
    AffineOperator,
    BallProjection,
    ConstantOperator,
    ConvergenceTrace,
    FixedPointResult,
    Negation,
    SolveOptions,
    TolerancePolicy,
    anchored_implicit_solve,
    fixed_inner_tol,
    make_rotation_flow,
    make_schedule,
    viscosity_implicit_solve,
)

SESSION_START = time.monotonic()

#: PASS/FAIL lines collected by the acceptance tests, echoed after the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_collection_modifyitems(items):
    # Acceptance runs last so its wall-clock budget covers the whole suite.
    items.sort(key=lambda item: item.path.name == "test_acceptance.py")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@dataclass
class RecordedRun:
    """One solved reference problem plus everything the checks need later."""

    name: str
    f: object
    target: object
    alpha: float
    opts: SolveOptions
    result: FixedPointResult
    trace: ConvergenceTrace
    inner: list = field(default_factory=list)
    duration: float = 0.0


def _recorded(name, f, target, alpha, opts, runner) -> RecordedRun:
    inner: list = []
    start = time.perf_counter()
    result, trace = runner(lambda n, eps, res: inner.append((n, eps, res)))
    duration = time.perf_counter() - start
    return RecordedRun(
        name=name,
        f=f,
        target=target,
        alpha=alpha,
        opts=opts,
        result=result,
        trace=trace,
        inner=inner,
        duration=duration,
    )


@pytest.fixture(scope="session")
def ball_run() -> RecordedRun:
    """Unit-ball projection in R^2 forced toward (2, 0), eps_n = 1/(n+1)."""
    f = ConstantOperator([2.0, 0.0])
    target = BallProjection([0.0, 0.0], 1.0)
    opts = SolveOptions()
    schedule = make_schedule("harmonic", {"p": 1.0}, 200)
    return _recorded(
        "ball",
        f,
        target,
        0.0,
        opts,
        lambda mon: viscosity_implicit_solve(f, target, schedule, opts=opts, inner_monitor=mon),
    )


@pytest.fixture(scope="session")
def scalar_run() -> RecordedRun:
    """Anchored scheme on T = -x with anchor 1; closed form 1/(2n-1).

    The tight inner tolerance keeps every iterate within ~1e-12 of the
    implicit solution so the closed-form comparison can be pinned at 1e-10.
    """
    target = Negation(1)
    opts = SolveOptions(inner_tol_rule=fixed_inner_tol(1e-12))
    return _recorded(
        "anchored-scalar",
        ConstantOperator([1.0]),
        target,
        0.0,
        opts,
        lambda mon: anchored_implicit_solve([1.0], target, n_max=200, opts=opts, inner_monitor=mon),
    )


def _rotation_forcing() -> AffineOperator:
    return AffineOperator(0.5 * np.eye(2), [1.0, 0.0])


@pytest.fixture(scope="session")
def rotation_run() -> RecordedRun:
    """Rotation-by-1-radian flow cycled at t = 1, f(x) = x/2 + (1, 0)."""
    family = make_rotation_flow([1.0], [1.0])
    f = _rotation_forcing()
    opts = SolveOptions()
    schedule = make_schedule("harmonic", {"p": 1.0}, 200)
    return _recorded(
        "rotation-flow",
        f,
        family,
        0.5,
        opts,
        lambda mon: viscosity_implicit_solve(f, family, schedule, opts=opts, inner_monitor=mon),
    )


@pytest.fixture(scope="session")
def rotation_long_run() -> RecordedRun:
    """Same rotation problem pushed to N = 2000 with a looser inner rule."""
    family = make_rotation_flow([1.0], [1.0])
    f = _rotation_forcing()
    opts = SolveOptions(
        outer_tol=1e-6,
        inner_tol_rule=fixed_inner_tol(1e-4),
        policy=TolerancePolicy(max_iter=50_000),
    )
    schedule = make_schedule("harmonic", {"p": 1.0}, 2000)
    return _recorded(
        "rotation-flow-long",
        f,
        family,
        0.5,
        opts,
        lambda mon: viscosity_implicit_solve(f, family, schedule, opts=opts, inner_monitor=mon),
    )

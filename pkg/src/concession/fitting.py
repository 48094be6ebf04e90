"""Nonlinear least-squares estimation of tanh concession curves.

The solver is a projected Levenberg-Marquardt iteration with Marquardt's
diagonal scaling and an analytic Jacobian.  Parameters are kept inside a box
derived from the data (see :func:`parameter_box`), and the fit is fully
deterministic: the restart grid is fixed and no random numbers are drawn.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import EmptyCorpusError, InsufficientDataError
from .model import OfferTrajectory, TanhParams

__all__ = [
    "FitKind",
    "FitOptions",
    "TanhFit",
    "FitDiagnostics",
    "ParameterBox",
    "CorpusFit",
    "initial_guess",
    "parameter_box",
    "jacobian",
    "fit_tanh",
    "fit_quality",
    "fit_corpus",
]


class FitKind(str, enum.Enum):
    FULL = "full"
    CONSTANT = "constant"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class FitOptions:
    max_iterations: int = 1000
    sse_rel_tol: float = 1e-10
    multistart_count: int = 8
    a_min: float = 1e-3
    a_max: float = 50.0
    # First solve counts as stalled below this R^2 and triggers the restart grid.
    stall_r_squared: float = 0.999

    def __post_init__(self) -> None:
        if min(self.max_iterations, self.multistart_count) < 1:
            raise ValueError("iteration and restart counts must be positive")
        if not (0 < self.sse_rel_tol and 0 < self.a_min < self.a_max):
            raise ValueError("tolerances and bounds must be positive")


@dataclass(frozen=True)
class TanhFit:
    params: TanhParams
    sse: float
    rmse: float
    r_squared: float
    n_points: int
    kind: FitKind
    iterations: int
    converged: bool
    role: str = ""
    negotiation_id: str = ""
    T: int = 0

    @property
    def usable(self) -> bool:
        """True when the fit carries concession dynamics worth scoring."""
        return self.kind is not FitKind.CONSTANT and self.params.b > 0


@dataclass(frozen=True)
class FitDiagnostics:
    rmse: float
    r_squared: float
    residuals: np.ndarray
    flagged: bool


@dataclass(frozen=True)
class ParameterBox:
    sign: float
    a_min: float
    a_max: float
    b_max: float
    d_lo: float
    d_hi: float
    c_scale: float  # |c| <= |a| * c_scale

    def project(self, p: np.ndarray) -> np.ndarray:
        magnitude = abs(p[0]) if p[0] * self.sign > 0 else self.a_min
        a = self.sign * min(max(magnitude, self.a_min), self.a_max)
        b = min(max(p[1], 0.0), self.b_max)
        c_lim = abs(a) * self.c_scale
        c = min(max(p[2], -c_lim), c_lim)
        d = min(max(p[3], self.d_lo), self.d_hi)
        return np.array([a, b, c, d])

    def at_a_bound(self, a: float) -> bool:
        return abs(a) <= self.a_min * (1 + 1e-9) or abs(a) >= self.a_max * (1 - 1e-9)


@dataclass
class _Solve:
    p: np.ndarray
    sse: float
    iterations: int
    converged: bool
    trace: list[float] = field(default_factory=list)


def initial_guess(traj: OfferTrajectory) -> TanhParams:
    """Data-driven starting point for the solver."""
    if len(traj) < 2:
        raise InsufficientDataError("initial guess needs at least two points")
    x, y = traj.x, traj.y
    d0 = (y.min() + y.max()) / 2
    b0 = (y.max() - y.min()) / 2
    sign = 1.0 if y[-1] >= y[0] else -1.0
    a0 = sign * 2.0 / max(traj.T, 1)
    c0 = a0 * (x[0] + x[-1]) / 2
    return TanhParams(a0, b0, c0, d0)


def parameter_box(traj: OfferTrajectory, sign: float, opts: FitOptions) -> ParameterBox:
    y = traj.y
    span = float(y.max() - y.min())
    b_max = 2.0 * span + 1.0
    return ParameterBox(
        sign=1.0 if sign >= 0 else -1.0,
        a_min=opts.a_min,
        a_max=opts.a_max,
        b_max=b_max,
        d_lo=float(y.min()) - 2 * b_max,
        d_hi=float(y.max()) + 2 * b_max,
        c_scale=traj.T + 5.0,
    )


def jacobian(p: Sequence[float], x: np.ndarray) -> np.ndarray:
    """Partial derivatives of ``d + b tanh(a x - c)`` w.r.t. (a, b, c, d)."""
    a, b, c, _ = p
    t = np.tanh(a * x - c)
    s = 1.0 - t * t
    return np.column_stack([b * x * s, t, -b * s, np.ones_like(x)])


def _solve_damped(J: np.ndarray, r: np.ndarray, diag: np.ndarray, lam: float) -> np.ndarray:
    M = np.vstack([J, np.diag(np.sqrt(lam * diag))])
    rhs = np.concatenate([-r, np.zeros(J.shape[1])])
    return np.linalg.lstsq(M, rhs, rcond=None)[0]


def _damped_step(residual, project, J, r, diag, lam, p):
    """Projected damped step; if the box clips it, also try with clipped coordinates frozen."""
    raw = p + _solve_damped(J, r, diag, lam)
    cand = project(raw)
    res = residual(cand)
    best = (cand, res, float(res @ res))
    clipped = np.abs(cand - raw) > 1e-12 * (1.0 + np.abs(raw))
    if clipped.any() and not clipped.all():
        # Clipped coordinates move to the bound; the free ones re-solve given that move.
        free = ~clipped
        step = np.zeros_like(p)
        step[clipped] = cand[clipped] - p[clipped]
        shifted = r + J[:, clipped] @ step[clipped]
        step[free] = _solve_damped(J[:, free], shifted, diag[free], lam)
        cand = project(p + step)
        res = residual(cand)
        sse = float(res @ res)
        if sse < best[2]:
            best = (cand, res, sse)
    return best


def _levenberg_marquardt(
    residual: Callable[[np.ndarray], np.ndarray],
    jac: Callable[[np.ndarray], np.ndarray],
    project: Callable[[np.ndarray], np.ndarray],
    p0: np.ndarray,
    opts: FitOptions,
    sse_floor: float,
) -> _Solve:
    p = project(np.asarray(p0, dtype=float))
    r = residual(p)
    sse = float(r @ r)
    trace = [sse]
    lam = 1e-3
    converged = False
    it = 0
    while it < opts.max_iterations:
        if sse <= sse_floor:
            converged = True
            break
        it += 1
        J = jac(p)
        diag = np.sum(J * J, axis=0)
        diag = np.maximum(diag, 1e-12 * max(float(diag.max()), 1e-300))
        accepted = False
        while lam <= 1e16:
            p_new, r_new, sse_new = _damped_step(residual, project, J, r, diag, lam, p)
            if np.isfinite(sse_new) and sse_new < sse:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # No descent direction at any damping: projected stationary point.
            converged = True
            break
        reduction = sse - sse_new
        p, r, sse = p_new, r_new, sse_new
        trace.append(sse)
        lam = max(lam / 10.0, 1e-12)
        if reduction <= opts.sse_rel_tol * (sse + reduction):
            converged = True
            break
    return _Solve(p=p, sse=sse, iterations=it, converged=converged, trace=trace)


def _r_squared(sse: float, y: np.ndarray) -> tuple[float, bool]:
    tss = float(np.sum((y - y.mean()) ** 2))
    if tss == 0.0:
        return (1.0 if sse <= 0.0 else 0.0), True
    return min(1.0, max(0.0, 1.0 - sse / tss)), False


def _make_fit(traj, p, sse, kind, iterations, converged) -> TanhFit:
    n = len(traj)
    params = TanhParams(*map(float, p)).canonical()
    if params.b == 0.0:
        kind = FitKind.CONSTANT
    r2, _ = _r_squared(sse, traj.y)
    return TanhFit(
        params=params,
        sse=float(sse),
        rmse=math.sqrt(sse / n),
        r_squared=r2,
        n_points=n,
        kind=kind,
        iterations=iterations,
        converged=converged,
        role=traj.role,
        negotiation_id=traj.negotiation_id,
        T=traj.T,
    )


def _sse_floor(y: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(y))), 1.0)
    return (1e-13 * scale) ** 2 * y.size


def _solve_full(traj: OfferTrajectory, start: TanhParams, opts: FitOptions) -> tuple[_Solve, ParameterBox]:
    x, y = traj.x, traj.y
    box = parameter_box(traj, math.copysign(1.0, start.a), opts)

    def residual(p):
        return p[3] + p[1] * np.tanh(p[0] * x - p[2]) - y

    solve = _levenberg_marquardt(
        residual, lambda p: jacobian(p, x), box.project, np.array(start.as_tuple()), opts, _sse_floor(y)
    )
    return solve, box


def _restart_grid(traj: OfferTrajectory, guess: TanhParams, count: int) -> list[TanhParams]:
    mid = (traj.x[0] + traj.x[-1]) / 2
    starts = []
    for mult in (0.5, 1.0, 2.0, 4.0):
        for sign in (1.0, -1.0):
            a0 = sign * mult / max(traj.T, 1)
            starts.append(TanhParams(a0, guess.b, a0 * mid, guess.d))
    return starts[:count]


def _better(cand: _Solve, best: _Solve | None) -> bool:
    if best is None:
        return True
    tol = 1e-12 * max(best.sse, cand.sse, 1e-300)
    if cand.sse < best.sse - tol:
        return True
    if abs(cand.sse - best.sse) <= tol:
        return abs(cand.p[0]) < abs(best.p[0])
    return False


def _fit_reduced(traj: OfferTrajectory, opts: FitOptions) -> TanhFit:
    # Three free parameters with the centre pinned at T/2: c = a * T / 2.
    x, y = traj.x, traj.y
    half = traj.T / 2.0
    guess = initial_guess(traj)
    box = parameter_box(traj, guess.a, opts)

    def expand(q):
        return np.array([q[0], q[1], q[0] * half, q[2]])

    def project(q):
        p = box.project(expand(q))
        return np.array([p[0], p[1], p[3]])

    def residual(q):
        return q[2] + q[1] * np.tanh(q[0] * (x - half)) - y

    def jac(q):
        t = np.tanh(q[0] * (x - half))
        s = 1.0 - t * t
        return np.column_stack([q[1] * (x - half) * s, t, np.ones_like(x)])

    q0 = np.array([guess.a, guess.b, guess.d])
    best = None
    for sign in (1.0, -1.0):
        box = parameter_box(traj, sign * math.copysign(1.0, guess.a), opts)
        start = q0.copy()
        start[0] = abs(start[0]) * box.sign
        solve = _levenberg_marquardt(residual, jac, project, start, opts, _sse_floor(y))
        if _better(solve, best):
            best = solve
    return _make_fit(traj, expand(best.p), best.sse, FitKind.DEGENERATE, best.iterations, best.converged)


def fit_tanh(traj: OfferTrajectory, opts: FitOptions | None = None) -> TanhFit:
    """Fit ``d + b tanh(a x - c)`` to a trajectory.

    Four or more points give a full four-parameter fit.  One to three points
    give a reduced model (constant, or three parameters with the centre pinned
    to ``T / 2``) flagged as ``FitKind.DEGENERATE``.  Non-convergence is not an
    error: the best solve found is returned with ``converged=False``.
    """
    opts = opts or FitOptions()
    n = len(traj)
    if n == 0:
        raise InsufficientDataError("cannot fit an empty trajectory")
    y = traj.y
    if n == 1 or float(np.ptp(y)) == 0.0:
        return _make_fit(traj, (0.0, 0.0, 0.0, float(y[0])), 0.0, FitKind.CONSTANT, 0, True)
    if n < 4:
        return _fit_reduced(traj, opts)

    guess = initial_guess(traj)
    first, box = _solve_full(traj, guess, opts)
    best = first
    r2, _ = _r_squared(first.sse, y)
    stalled = (not first.converged) or r2 < opts.stall_r_squared or box.at_a_bound(first.p[0])
    if stalled:
        for start in _restart_grid(traj, guess, opts.multistart_count):
            solve, _ = _solve_full(traj, start, opts)
            if _better(solve, best):
                best = solve
    return _make_fit(traj, best.p, best.sse, FitKind.FULL, best.iterations, best.converged)


def fit_trace(traj: OfferTrajectory, opts: FitOptions | None = None) -> list[float]:
    """SSE after each accepted iterate of the first full solve (for diagnostics)."""
    opts = opts or FitOptions()
    solve, _ = _solve_full(traj, initial_guess(traj), opts)
    return solve.trace


def fit_quality(fit: TanhFit, traj: OfferTrajectory) -> FitDiagnostics:
    p = fit.params
    residuals = traj.y - (p.d + p.b * np.tanh(p.a * traj.x - p.c))
    sse = float(residuals @ residuals)
    r2, flagged = _r_squared(sse, traj.y)
    return FitDiagnostics(rmse=math.sqrt(sse / len(traj)), r_squared=r2, residuals=residuals, flagged=flagged)


@dataclass(frozen=True)
class CorpusFit:
    fits: list[TanhFit]
    median_params: dict[str, TanhParams | None]
    excluded: dict[str, int]


def _fit_one(args):
    traj, opts = args
    return fit_tanh(traj, opts)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("CONCESSION_WORKERS", "1")))
    except ValueError:
        return 1


def fit_corpus(
    trajs: Iterable[OfferTrajectory],
    opts: FitOptions | None = None,
    workers: int | None = None,
) -> CorpusFit:
    """Fit every trajectory and take per-role medians of the usable fits.

    Only full, converged fits enter the medians; every other fit is counted
    in ``excluded``.  A role without a single usable fit maps to ``None``.
    """
    opts = opts or FitOptions()
    trajs = list(trajs)
    if not trajs:
        raise EmptyCorpusError("fit_corpus needs at least one trajectory")
    workers = workers or default_workers()
    if workers > 1 and len(trajs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            fits = list(pool.map(_fit_one, [(t, opts) for t in trajs], chunksize=8))
    else:
        fits = [fit_tanh(t, opts) for t in trajs]

    medians: dict[str, TanhParams | None] = {}
    excluded: dict[str, int] = {}
    for role in sorted({f.role for f in fits}):
        group = [f for f in fits if f.role == role]
        good = [f for f in group if f.kind is FitKind.FULL and f.converged]
        excluded[role] = len(group) - len(good)
        if good:
            arr = np.array([f.params.as_tuple() for f in good])
            medians[role] = TanhParams(*map(float, np.median(arr, axis=0)))
        else:
            medians[role] = None
    return CorpusFit(fits=fits, median_params=medians, excluded=excluded)

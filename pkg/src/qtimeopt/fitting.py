"""Fits that turn sweep envelopes into minimal-time estimates.

The central model is the power-law approach of the infidelity to zero,

    y = a * (b - x)**c,        y = 1 - F,   x = T / T2MAX,

fitted on the window 0.002 <= y <= 0.01 by default; the parameter b
estimates the minimal time of the target in units of T2MAX.  Linear and
exponential-in-n models describe how that estimate scales with the
qubit count for structured and generic targets respectively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import FitConvergenceError, InsufficientDataError

__all__ = [
    "FitResult",
    "DEFAULT_WINDOW",
    "fit_power",
    "fit_linear",
    "fit_exp2",
    "estimate_time_complexity",
]

DEFAULT_WINDOW = (0.002, 0.01)


@dataclass
class FitResult:
    """Outcome of one fit: model name, parameters, residual sum of
    squares, the number of points used, and the data window applied
    (None when the model uses every point)."""

    model: str
    params: dict[str, float]
    rss: float
    n_points: int
    window: tuple[float, float] | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "model": self.model,
            "params": self.params,
            "rss": self.rss,
            "n_points": self.n_points,
        }
        if self.window is not None:
            out["window"] = list(self.window)
        if self.extra:
            out["extra"] = self.extra
        return out


def _as_xy(points) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("points must be an iterable of (x, y) pairs")
    # Canonical ordering makes every fit independent of input order,
    # down to the floating-point summation sequence.
    order = np.lexsort((arr[:, 1], arr[:, 0]))
    arr = arr[order]
    return arr[:, 0], arr[:, 1]


def fit_power(
    points,
    window: tuple[float, float] = DEFAULT_WINDOW,
    max_iter: int = 500,
    tol: float = 1e-14,
) -> FitResult:
    """Least-squares fit of y = a (b - x)**c inside the y-window.

    Damped Gauss-Newton from b0 = max(x) + 0.1 * (max(x) - min(x)),
    c0 = 3, and a0 matching the two extreme window points (geometric
    mean); the step halves whenever the residual would increase.  The
    internal parameterization is (log a, b, log c), which keeps a and c
    positive and the Jacobian columns on a common scale; b stays above
    max(x) by clipping.

    Raises InsufficientDataError with fewer than 4 window points.  If
    the iteration stops without reaching a stationary point (the line
    search dies or max_iter runs out away from a local minimum) a
    FitConvergenceError carrying the best iterate is raised.
    """
    x_all, y_all = _as_xy(points)
    lo, hi = window
    keep = (y_all >= lo) & (y_all <= hi)
    x, y = x_all[keep], y_all[keep]
    if len(x) < 4:
        raise InsufficientDataError(
            f"power fit needs >= 4 points with {lo} <= y <= {hi}; got {len(x)}"
        )
    x_min, x_max = float(x[0]), float(x[-1])
    if x_max - x_min <= 0:
        raise InsufficientDataError("window points share a single x value")
    if np.any(y <= 0):
        raise ValueError("power fit requires positive y values")
    b = x_max + 0.1 * (x_max - x_min)
    b_floor = x_max + 1e-12
    lc = math.log(3.0)
    la = 0.5 * (
        math.log(y[0] / (b - x_min) ** 3.0) + math.log(y[-1] / (b - x_max) ** 3.0)
    )

    def model(la_, b_, lc_):
        return np.exp(la_) * (b_ - x) ** np.exp(lc_)

    f = model(la, b, lc)
    r = y - f
    rss = float(r @ r)
    yy = float(y @ y)
    span = x_max - x_min

    # Basin selection.  The documented start sits close above max(x),
    # which for data generated by a larger true b lies in a separate
    # descent valley (c runs away instead of b); a coarse deterministic
    # ladder of b candidates, each with (log a, c) solved exactly in
    # log space, picks the best basin before the iteration begins.
    logy = np.log(y)
    offsets = sorted(
        {span * 0.1 * 2.0**k for k in range(8)} | {0.05, 0.1, 0.2, 0.4, 0.8, 1.0}
    )
    for off in offsets:
        b_try = x_max + off
        design = np.column_stack([np.ones_like(x), np.log(b_try - x)])
        sol, *_ = np.linalg.lstsq(design, logy, rcond=None)
        la_try = float(sol[0])
        lc_try = min(max(math.log(max(sol[1], 1e-9)), math.log(1e-9)), math.log(1e3))
        f_try = model(la_try, b_try, lc_try)
        r_try = y - f_try
        rss_try = float(r_try @ r_try)
        if rss_try < rss:
            la, b, lc, f, r, rss = la_try, b_try, lc_try, f_try, r_try, rss_try

    stalled = False
    for _ in range(max_iter):
        cc = np.exp(lc)
        base = b - x
        jac = np.column_stack([-f, -f * cc / base, -f * cc * np.log(base)])
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        gain = 0.0

        def try_step(step, halvings):
            # Near-degenerate Jacobians produce enormous raw steps along
            # the (a, c) trade-off ridge; capping the length keeps the
            # iteration out of the c -> infinity valley.  The step then
            # halves as long as the residual would increase.
            nonlocal la, b, lc, f, r, rss, gain
            mag = max(abs(step[0]), abs(step[1]) / span, abs(step[2]))
            if mag > 0.5:
                step = step * (0.5 / mag)
            damping = 1.0
            for _ in range(halvings):
                la_t = la + damping * step[0]
                b_t = max(b + damping * step[1], b_floor)
                lc_t = min(max(lc + damping * step[2], math.log(1e-9)), math.log(1e3))
                f_t = model(la_t, b_t, lc_t)
                r_t = y - f_t
                rss_t = float(r_t @ r_t)
                if rss_t < rss:
                    gain = rss - rss_t
                    la, b, lc, f, r, rss = la_t, b_t, lc_t, f_t, r_t, rss_t
                    return True
                damping *= 0.5
            return False

        accepted = try_step(step, 60)
        if not accepted:
            # Regularized retries interpolate toward scaled steepest
            # descent when the raw step is unusable near a noisy,
            # strongly curved minimum.
            jtj = jac.T @ jac
            jtr = jac.T @ r
            reg = np.diag(np.diag(jtj)) + 1e-300 * np.eye(3)
            mu = 1e-8
            while mu <= 1e8 and not accepted:
                lm_step, *_ = np.linalg.lstsq(jtj + mu * reg, -jtr, rcond=None)
                accepted = try_step(lm_step, 20)
                mu *= 100.0
        if not accepted:
            stalled = True
        if stalled or gain <= tol * max(rss, 1e-300):
            break
    result = FitResult(
        model="power",
        params={"a": float(np.exp(la)), "b": float(b), "c": float(np.exp(lc))},
        rss=rss,
        n_points=len(x),
        window=(lo, hi),
    )
    if rss <= 1e-24 * max(yy, 1e-300):
        return result
    # Stationarity: the gradient J^T r must be negligible against the
    # product of the residual and Jacobian scales, otherwise the
    # iteration merely stopped making progress somewhere unhelpful.
    cc = np.exp(lc)
    base = b - x
    jac = np.column_stack([-f, -f * cc / base, -f * cc * np.log(base)])
    denom = float(np.linalg.norm(r) * np.abs(jac).max() + 1e-300)
    stationarity = float(np.linalg.norm(jac.T @ r)) / denom
    if stationarity < 1e-5:
        return result
    raise FitConvergenceError(
        f"power fit stopped without reaching a stationary point "
        f"(stationarity {stationarity:.2e}, rss {rss:.3e})",
        best=result,
    )


def fit_linear(points) -> FitResult:
    """Ordinary least squares t = slope * n + intercept."""
    x, y = _as_xy(points)
    if len(np.unique(x)) < 2:
        raise InsufficientDataError("linear fit needs at least 2 distinct x values")
    design = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    r = y - design @ coef
    return FitResult(
        model="linear",
        params={"slope": float(coef[0]), "intercept": float(coef[1])},
        rss=float(r @ r),
        n_points=len(x),
    )


def fit_exp2(points) -> FitResult:
    """Fit t = p * 2**(q n) by ordinary least squares on log2(t) vs n.

    All t must be positive; the reported rss is in log2 space.
    """
    x, y = _as_xy(points)
    if np.any(y <= 0):
        raise ValueError("exponential fit requires positive t values")
    if len(np.unique(x)) < 2:
        raise InsufficientDataError("exponential fit needs at least 2 distinct n")
    logy = np.log2(y)
    design = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, logy, rcond=None)
    r = logy - design @ coef
    return FitResult(
        model="exp2",
        params={"p": float(2.0 ** coef[1]), "q": float(coef[0])},
        rss=float(r @ r),
        n_points=len(x),
        extra={"rss_space": "log2"},
    )


def estimate_time_complexity(
    envelope, window: tuple[float, float] = DEFAULT_WINDOW
) -> FitResult:
    """Estimate the minimal time of a target from a sweep envelope.

    Takes the converged envelope points, fits the power-law approach of
    y = 1 - F against x = T / T2MAX, and reports b (the estimated
    minimal time in units of T2MAX) along with the window used.  The
    envelope may be an :class:`~qtimeopt.sweep.Envelope` or any
    iterable of (x, fidelity, converged) triples.
    """
    rows = getattr(envelope, "points", envelope)
    pts = [(t, 1.0 - f) for (t, f, conv) in rows if conv]
    if len(pts) < 4:
        raise InsufficientDataError(
            f"envelope has {len(pts)} converged points; need >= 4 in the window"
        )
    result = fit_power(pts, window=window)
    result.extra["t_estimate_t2max"] = result.params["b"]
    return result

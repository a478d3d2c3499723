"""Limited-memory BFGS with a strong-Wolfe line search.

The point is treated as one flat vector; callers pack multiple frames
themselves.  The search direction comes from the standard two-loop
recursion with initial scaling gamma = (s.y)/(y.y) from the most recent
pair; curvature pairs with y.s <= 1e-10 are skipped.  The very first
iteration (and any iteration after a history reset) takes a steepest
descent direction with initial trial step 1/max|g|.

Every accepted step satisfies both strong Wolfe conditions, so accepted
losses strictly decrease.  Runs are bit-deterministic for identical
objective, start point and config.

An optional box mode projects each accepted iterate onto [box_min,
box_max] and re-evaluates there; it exists for comparison runs and the
monotonic-decrease guarantee applies only to the unconstrained mode.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import LineSearchError, NonDescentError, NumericError, ShapeError
from .tensor import Tensor


@dataclass
class LbfgsConfig:
    max_iters: int = 500
    memory: int = 10
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    grad_tol: float = 1e-8  # on the gradient max-norm
    max_line_search_steps: int = 20
    box_min: float | None = None
    box_max: float | None = None

    def __post_init__(self):
        if not (0.0 < self.wolfe_c1 < self.wolfe_c2 < 1.0):
            raise NumericError("require 0 < c1 < c2 < 1")
        if self.memory < 1 or self.max_iters < 1:
            raise NumericError("memory and max_iters must be >= 1")


@dataclass
class OptimizationTrace:
    """Per-iteration history; row 0 is the starting point with step 0."""

    iterations: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    reason: str = ""

    def append(self, iteration, loss, grad_norm, step):
        self.iterations.append(int(iteration))
        self.losses.append(float(loss))
        self.grad_norms.append(float(grad_norm))
        self.steps.append(float(step))

    def __len__(self):
        return len(self.iterations)

    @property
    def initial_loss(self) -> float:
        return self.losses[0]

    @property
    def final_loss(self) -> float:
        return self.losses[-1]

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("iter,loss,grad_norm,step\n")
        for i, f, g, s in zip(self.iterations, self.losses, self.grad_norms, self.steps):
            out.write(f"{i},{f!r},{g!r},{s!r}\n")
        return out.getvalue()

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())


def _norm_inf(g) -> float:
    return float(np.max(np.abs(g)))


def _dot(a, b) -> float:
    return float(np.dot(a.ravel(), b.ravel()))


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic through (a, fa, da), (b, fb, db); NaN if degenerate."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0.0:
        return float("nan")
    d2 = np.sign(b - a) * np.sqrt(disc)
    denom = db - da + 2.0 * d2
    if denom == 0.0:
        return float("nan")
    return b - (b - a) * (db + d2 - d1) / denom


def line_search_wolfe(objective, x, direction, f0, g0, cfg: LbfgsConfig, initial_step=1.0):
    """Find a step satisfying the strong Wolfe conditions along ``direction``.

    Returns (step, f_new, g_new).  Bracketing expands via a secant estimate
    of the directional derivative's root (falling back to doubling); the
    zoom stage interpolates cubically with a bisection safeguard.  Raises
    NonDescentError if ``direction`` does not descend and LineSearchError
    when the evaluation budget runs out before both conditions hold.
    """
    d = direction
    dphi0 = _dot(g0, d)
    if dphi0 >= 0.0:
        raise NonDescentError(f"not a descent direction (g.d = {dphi0:g})")
    c1, c2 = cfg.wolfe_c1, cfg.wolfe_c2
    budget = cfg.max_line_search_steps

    def evaluate(alpha):
        f, g = objective(x + alpha * d)
        return f, g, _dot(g, d)

    # Near the optimum, loss differences fall below double rounding and the
    # exact Armijo comparison can reject every trial; the epsilon term keeps
    # the sufficient-decrease test meaningful at that scale.
    f_eps = 1e-12 * max(1.0, abs(f0))

    def zoom(lo, phi_lo, dphi_lo, hi, phi_hi, dphi_hi, budget):
        while budget > 0:
            alpha = _cubic_min(lo, phi_lo, dphi_lo, hi, phi_hi, dphi_hi)
            left, right = min(lo, hi), max(lo, hi)
            margin = 0.05 * (right - left)
            if not np.isfinite(alpha) or not (left + margin <= alpha <= right - margin):
                alpha = 0.5 * (lo + hi)
            f, g, dphi = evaluate(alpha)
            budget -= 1
            if abs(dphi) <= -c2 * dphi0 and f <= f0 + c1 * alpha * dphi0 + f_eps:
                return alpha, f, g
            if f > f0 + c1 * alpha * dphi0 or f >= phi_lo:
                hi, phi_hi, dphi_hi = alpha, f, dphi
            else:
                if dphi * (hi - lo) >= 0.0:
                    hi, phi_hi, dphi_hi = lo, phi_lo, dphi_lo
                lo, phi_lo, dphi_lo = alpha, f, dphi
            if right - left <= 1e-16 * max(1.0, right):
                raise LineSearchError("zoom interval collapsed without a Wolfe point")
        raise LineSearchError("step bracketing exhausted")

    alpha_prev, phi_prev, dphi_prev = 0.0, f0, dphi0
    alpha = float(initial_step)
    first = True
    while budget > 0:
        f, g, dphi = evaluate(alpha)
        budget -= 1
        # A trial meeting both conditions is a valid result even when the
        # f >= phi_prev bracket heuristic fires (ties at rounding scale).
        if f <= f0 + c1 * alpha * dphi0 and abs(dphi) <= -c2 * dphi0:
            return alpha, f, g
        if f > f0 + c1 * alpha * dphi0 or (not first and f >= phi_prev):
            return zoom(alpha_prev, phi_prev, dphi_prev, alpha, f, dphi, budget)
        if dphi >= 0.0:
            return zoom(alpha, f, dphi, alpha_prev, phi_prev, dphi_prev, budget)
        # Still descending: extrapolate with the secant root of the
        # directional derivative, falling back to doubling.
        denom = dphi_prev - dphi
        cand = alpha + dphi * (alpha - alpha_prev) / denom if denom != 0.0 else float("nan")
        if not np.isfinite(cand) or cand <= alpha:
            cand = 2.0 * alpha
        cand = min(cand, 1e12)
        alpha_prev, phi_prev, dphi_prev = alpha, f, dphi
        alpha = cand
        first = False
    raise LineSearchError("step bracketing exhausted")


def _two_loop(g, pairs):
    q = g.ravel().astype(g.dtype, copy=True)
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * _dot(s, q)
        alphas.append(a)
        q -= a * y
    s_last, y_last, _ = pairs[-1]
    gamma = _dot(s_last, y_last) / _dot(y_last, y_last)
    r = gamma * q
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * _dot(y, r)
        r += (a - b) * s
    return -r.reshape(g.shape)


def minimize(objective, x0: Tensor, cfg: LbfgsConfig | None = None):
    """Minimize ``objective: point -> (loss, grad)`` from ``x0``.

    Returns (x_final, OptimizationTrace).  Termination reason is one of
    max_iters, grad_tol, line_search_failure; on line-search failure the
    best (latest accepted) point is returned.
    """
    cfg = cfg or LbfgsConfig()
    x = np.array(x0, copy=True)
    f, g = objective(x)
    if g.shape != x.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match point shape {x.shape}")
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise NumericError("objective returned non-finite loss or gradient at x0")

    boxed = cfg.box_min is not None or cfg.box_max is not None
    trace = OptimizationTrace()
    trace.append(0, f, _norm_inf(g), 0.0)
    if _norm_inf(g) <= cfg.grad_tol:
        trace.reason = "grad_tol"
        return x, trace

    pairs = []  # (s, y, rho) flat f-arrays, oldest first
    trace.reason = "max_iters"
    for it in range(1, cfg.max_iters + 1):
        if pairs:
            d = _two_loop(g, pairs)
            dphi0 = _dot(g, d)
            if dphi0 >= 0.0:
                # Degenerate curvature: drop the history, restart steepest.
                pairs.clear()
        if not pairs:
            d = -g
            initial_step = 1.0 / _norm_inf(g)
        else:
            initial_step = 1.0
        try:
            step, f_new, g_new = line_search_wolfe(
                objective, x, d, f, g, cfg, initial_step=initial_step
            )
        except LineSearchError:
            trace.reason = "line_search_failure"
            break
        if not f_new < f:
            # Rounding-scale tie: no measurable progress left at this scale.
            trace.reason = "line_search_failure"
            break
        x_new = x + step * d
        if boxed:
            lo = -np.inf if cfg.box_min is None else cfg.box_min
            hi = np.inf if cfg.box_max is None else cfg.box_max
            clipped = np.clip(x_new, lo, hi)
            if not np.array_equal(clipped, x_new):
                x_new = clipped
                f_new, g_new = objective(x_new)
        s = (x_new - x).ravel()
        y = (g_new - g).ravel()
        ys = _dot(y, s)
        if ys > 1e-10:
            pairs.append((s, y, 1.0 / ys))
            if len(pairs) > cfg.memory:
                pairs.pop(0)
        x, f, g = x_new, f_new, g_new
        trace.append(it, f, _norm_inf(g), step)
        if _norm_inf(g) <= cfg.grad_tol:
            trace.reason = "grad_tol"
            break
    return x, trace

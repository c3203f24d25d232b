"""Full-batch training: ridge-penalised objective, L-BFGS and momentum GD.

The newsvendor loss is piecewise linear, which is awkward for quasi-Newton
methods. The L-BFGS loop here therefore

* drops curvature pairs with ``s.y <= 1e-10``,
* falls back to ``-grad`` if the two-loop direction is not a descent
  direction, and
* uses a plain backtracking Armijo search (no curvature condition).
"""

import csv
import enum
import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .losses import LossKind

logger = logging.getLogger(__name__)

ARMIJO_C1 = 1e-4
CURVATURE_EPS = 1e-10


class Optimizer(enum.Enum):
    LBFGS = "lbfgs"
    MOMENTUM_GD = "momentum"


class TrainingError(RuntimeError):
    """Raised when the objective stops being finite."""

    def __init__(self, iteration, value):
        super().__init__(f"non-finite objective {value!r} at iteration {iteration}")
        self.iteration = iteration
        self.value = value


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 1e-3
    max_iters: int = 2000
    tolerance: float = 1e-6
    lbfgs_memory: int = 10
    seed: int = 0
    optimizer: Optimizer = Optimizer.LBFGS
    learning_rate: float = 0.01
    momentum: float = 0.9

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.lbfgs_memory < 1:
            raise ValueError(f"lbfgs_memory must be >= 1, got {self.lbfgs_memory}")
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))

    def to_dict(self):
        return {
            "lambda": self.lam,
            "max_iters": self.max_iters,
            "tolerance": self.tolerance,
            "lbfgs_memory": self.lbfgs_memory,
            "seed": self.seed,
            "optimizer": self.optimizer.value,
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
        }


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    initial_fun: float
    trace: list = field(default_factory=list)
    iterations: int = 0
    stop_reason: str = ""


@dataclass
class TrainReport:
    """Outcome of ``train``. ``loss_trace[i]`` is the objective after step i+1."""

    model: object
    loss_trace: list
    iterations: int
    stop_reason: str
    initial_objective: float

    @property
    def final_objective(self):
        return self.loss_trace[-1] if self.loss_trace else self.initial_objective


def regularizer(params, lam, mask=None):
    """Ridge penalty ``lam * sum(w**2)`` over the masked entries and its gradient."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    w = np.asarray(params, dtype=np.float64)
    if mask is not None:
        w = np.where(mask, w, 0.0)
    return float(lam * np.dot(w, w)), 2.0 * lam * w


def lbfgs_step(history, grad):
    """Two-loop recursion: approximate ``-H grad`` from ``(s, y)`` pairs.

    ``history`` is ordered oldest first. Pairs without positive curvature
    are ignored. With nothing usable the result is ``-grad``.
    """
    q = np.array(grad, dtype=np.float64)
    pairs = [(s, y) for s, y in history if float(np.dot(s, y)) > CURVATURE_EPS]
    if not pairs:
        return -q
    rhos = [1.0 / float(np.dot(s, y)) for s, y in pairs]
    alphas = []
    for (s, y), rho in zip(reversed(pairs), reversed(rhos)):
        a = rho * float(np.dot(s, q))
        q -= a * y
        alphas.append(a)
    s, y = pairs[-1]
    q *= float(np.dot(s, y)) / float(np.dot(y, y))
    for (s, y), rho, a in zip(pairs, rhos, reversed(alphas)):
        b = rho * float(np.dot(y, q))
        q += (a - b) * s
    return -q


def armijo_search(fun, x, f0, g0, direction, step=1.0, shrink=0.5, max_halvings=60, iteration=None):
    """Backtrack until ``f(x + t d) <= f0 + c1 t g0.d``.

    Returns ``(t, f_new, g_new)``, or ``None`` when no step passes before
    the trial point stops moving. A non-finite trial value raises
    ``TrainingError``.
    """
    slope = float(np.dot(g0, direction))
    t = step
    for _ in range(max_halvings):
        trial = x + t * direction
        if np.array_equal(trial, x):
            return None
        f_new, g_new = fun(trial)
        if not math.isfinite(f_new):
            raise TrainingError(iteration, f_new)
        if f_new <= f0 + ARMIJO_C1 * t * slope:
            return t, f_new, g_new
        t *= shrink
    return None


def _check_finite(value, iteration):
    if not math.isfinite(value):
        raise TrainingError(iteration, value)


def lbfgs_minimize(fun, x0, memory=10, max_iters=2000, tolerance=1e-6):
    """Minimise ``fun(x) -> (value, grad)`` with L-BFGS and Armijo backtracking."""
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    _check_finite(f, 0)
    result = MinimizeResult(x=x, fun=f, grad=g, initial_fun=f)
    history = deque(maxlen=memory)
    for it in range(1, max_iters + 1):
        if np.max(np.abs(g), initial=0.0) < tolerance:
            result.stop_reason = "gradient_tolerance"
            break
        direction = lbfgs_step(history, g)
        if float(np.dot(direction, g)) >= 0:
            direction = -g
        # first steepest-descent step is normalised so it cannot overshoot wildly
        step = 1.0 if history else min(1.0, 1.0 / float(np.linalg.norm(g)))
        found = armijo_search(fun, x, f, g, direction, step=step, iteration=it)
        if found is None and history:
            history.clear()
            direction = -g
            found = armijo_search(fun, x, f, g, direction, step=min(1.0, 1.0 / float(np.linalg.norm(g))),
                                  iteration=it)
        if found is None:
            result.stop_reason = "line_search_failed"
            break
        t, f_new, g_new = found
        x_new = x + t * direction
        s, y = x_new - x, g_new - g
        if float(np.dot(s, y)) > CURVATURE_EPS:
            history.append((s, y))
        x, f, g = x_new, f_new, g_new
        result.trace.append(f)
        result.iterations = it
    else:
        result.stop_reason = "max_iters"
    result.x, result.fun, result.grad = x, f, g
    return result


def momentum_minimize(fun, x0, learning_rate=0.01, momentum=0.9, max_iters=2000, tolerance=1e-6):
    """Heavy-ball gradient descent that only keeps non-increasing iterates.

    A step that would raise the objective resets the velocity and halves
    the learning rate instead, so the recorded trace never goes up.
    """
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    _check_finite(f, 0)
    result = MinimizeResult(x=x, fun=f, grad=g, initial_fun=f)
    v = np.zeros_like(x)
    lr = learning_rate
    for it in range(1, max_iters + 1):
        if np.max(np.abs(g), initial=0.0) < tolerance:
            result.stop_reason = "gradient_tolerance"
            break
        v = momentum * v - lr * g
        f_new, g_new = fun(x + v)
        _check_finite(f_new, it)
        if f_new > f:
            v = np.zeros_like(x)
            lr *= 0.5
            if lr < 1e-16:
                result.stop_reason = "step_underflow"
                break
            result.trace.append(f)
        else:
            x, f, g = x + v, f_new, g_new
            result.trace.append(f)
        result.iterations = it
    else:
        result.stop_reason = "max_iters"
    result.x, result.fun, result.grad = x, f, g
    return result


def make_objective(model, X, D, c, kind, lam):
    """Closure ``params -> (mean loss + ridge, gradient)`` for ``model``."""
    kind = LossKind.parse(kind)
    mask = model.reg_mask()

    def objective(vec):
        m = model.with_params(vec)
        value, grad = m.loss_and_grad(X, D, c, kind)
        r, rg = regularizer(vec, lam, mask)
        return value + r, grad + rg

    return objective


def train(model, data, c, kind, cfg=None):
    """Fit ``model`` to ``data`` under loss ``kind`` and return a TrainReport."""
    cfg = cfg or TrainConfig()
    if data.n_rows == 0:
        raise ValueError("cannot train on an empty dataset")
    objective = make_objective(model, data.features, data.demands, c, kind, cfg.lam)
    if cfg.optimizer is Optimizer.LBFGS:
        res = lbfgs_minimize(objective, model.params(), cfg.lbfgs_memory, cfg.max_iters, cfg.tolerance)
    else:
        res = momentum_minimize(
            objective, model.params(), cfg.learning_rate, cfg.momentum, cfg.max_iters, cfg.tolerance
        )
    logger.debug("train %s: %d iterations, stop=%s, objective %.6g -> %.6g",
                 LossKind.parse(kind).value, res.iterations, res.stop_reason, res.initial_fun, res.fun)
    return TrainReport(
        model=model.with_params(res.x),
        loss_trace=list(res.trace),
        iterations=res.iterations,
        stop_reason=res.stop_reason,
        initial_objective=res.initial_fun,
    )


def write_trace_csv(report, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "objective"])
        w.writerow([0, repr(report.initial_objective)])
        for i, v in enumerate(report.loss_trace, start=1):
            w.writerow([i, repr(v)])

"""Newsvendor training objectives.

Two losses compete throughout the package:

* ``ORIGINAL``  - the piecewise-linear newsvendor cost
  ``cp * (d - y)+ + ch * (y - d)+`` summed over products.
* ``QUADRATIC`` - the same per-product penalty, squared, then summed.

Shortage (``d > y``) is always charged ``cp`` and overage ``ch``.
"""

import enum
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CostPair:
    """Per-unit shortage cost ``cp`` and holding cost ``ch``."""

    cp: float
    ch: float

    def __post_init__(self):
        if not (self.cp > 0 and self.ch > 0):
            raise ValueError(f"costs must be positive, got cp={self.cp}, ch={self.ch}")

    @property
    def critical_fractile(self):
        return self.cp / (self.cp + self.ch)

    @classmethod
    def from_ratio(cls, ratio, ch=1.5):
        return cls(cp=ch * ratio, ch=ch)


class LossKind(enum.Enum):
    ORIGINAL = "original"
    QUADRATIC = "quadratic"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown loss kind {value!r} (choose from {choices})") from None


def _pair(d, y):
    d = np.asarray(d, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if d.shape != y.shape:
        raise ValueError(f"length mismatch: demand {d.shape} vs order {y.shape}")
    return d, y


def relu(a):
    return np.maximum(a, 0.0)


def penalty(d, y, c):
    """Elementwise newsvendor penalty ``cp*(d-y)+ + ch*(y-d)+``."""
    d, y = _pair(d, y)
    gap = d - y
    return np.where(gap > 0, c.cp * gap, c.ch * -gap)


def newsvendor_cost(d, y, c):
    return float(np.sum(penalty(d, y, c)))


def quadratic_cost(d, y, c):
    return float(np.sum(penalty(d, y, c) ** 2))


def cost_via_relu(d, y, c):
    """Newsvendor cost written as two ReLU units on the prediction gap."""
    d, y = _pair(d, y)
    return float(np.sum(c.cp * relu(d - y) + c.ch * relu(y - d)))


def loss_grad(d, y, c, kind):
    """Derivative of the chosen loss with respect to the orders ``y``.

    For the original loss the result is a subgradient: ``-cp`` under
    shortage, ``+ch`` under overage and ``0`` at an exact fit, which lies
    inside the subdifferential ``[-cp, ch]``.
    """
    d, y = _pair(d, y)
    kind = LossKind.parse(kind)
    short = d > y
    over = y > d
    if kind is LossKind.ORIGINAL:
        return np.where(short, -c.cp, np.where(over, c.ch, 0.0))
    gap = d - y
    return np.where(short, -2.0 * c.cp**2 * gap, np.where(over, -2.0 * c.ch**2 * gap, 0.0))


def cost(d, y, c, kind):
    kind = LossKind.parse(kind)
    if kind is LossKind.ORIGINAL:
        return newsvendor_cost(d, y, c)
    return quadratic_cost(d, y, c)


def batch_loss(D, Y, c, kind):
    """Mean over rows of the per-row loss, plus its gradient w.r.t. ``Y``.

    ``D`` and ``Y`` are ``(N, m)``. Products are summed within a row and
    rows are averaged, so the value does not grow with the sample count.
    """
    D, Y = _pair(D, Y)
    if D.ndim != 2 or D.shape[0] == 0:
        raise ValueError(f"expected a non-empty (N, m) batch, got {D.shape}")
    n = D.shape[0]
    kind = LossKind.parse(kind)
    pen = penalty(D, Y, c)
    if kind is LossKind.ORIGINAL:
        value = float(np.sum(pen)) / n
    else:
        value = float(np.sum(pen**2)) / n
    return value, loss_grad(D, Y, c, kind) / n

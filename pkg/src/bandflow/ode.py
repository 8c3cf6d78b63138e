"""Embedded adaptive Runge-Kutta integration (Dormand-Prince 5(4)).

Exposes a resumable stepper rather than a solve-to-end routine: the flow
engine interleaves convergence checks, snapshot capture and block deflation
between accepted steps, so it needs to drive the integration itself.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = ["Dopri54", "StepSizeUnderflow"]

# Dormand & Prince 1980, 7 stages, order 5(4), FSAL.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
# FSAL: row _A[6] doubles as the 5th-order weights b.
# _E is the difference between the 5th- and embedded 4th-order weights.
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_ALPHA = 0.7 / 5.0  # PI controller exponents (Gustafsson)
_BETA = 0.4 / 5.0


class StepSizeUnderflow(RuntimeError):
    """Raised when the controller drives the step below resolvable size."""

    def __init__(self, t: float, message: str):
        super().__init__(message)
        self.t = t


class Dopri54:
    """Resumable Dormand-Prince 5(4) stepper with PI step-size control.

    The accept/reject test is ``||err||_2 <= abs_tol + rel_tol * scale(y)``
    where ``scale`` defaults to the Euclidean norm of the state.  ``step``
    advances exactly one accepted step, clipped so it never crosses the
    supplied cap; hitting the cap exactly is how callers land on snapshot
    times.
    """

    def __init__(
        self,
        fun: Callable[[float, np.ndarray], np.ndarray],
        t0: float,
        y0: np.ndarray,
        rel_tol: float = 1e-10,
        abs_tol: float = 1e-12,
        scale: Callable[[np.ndarray], float] | None = None,
        max_step: float = np.inf,
        first_step: float | None = None,
    ):
        if rel_tol <= 0 or abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        self.fun = fun
        self.t = float(t0)
        self.y = np.asarray(y0, dtype=float).copy()
        self._scale = scale if scale is not None else lambda y: float(np.linalg.norm(y))
        self.rel_tol = rel_tol
        self.abs_tol = abs_tol
        self.max_step = max_step
        self._k = np.empty((7, self.y.size))
        self._k[0] = fun(self.t, self.y)  # FSAL carry lives in row 0
        self._err_prev = 1.0
        if first_step is not None:
            if first_step <= 0.0:
                raise ValueError("first_step must be positive")
            self.h = float(min(first_step, max_step))
        else:
            self.h = self._initial_step()
        self.n_accepted = 0
        self.n_rejected = 0

    def _tol(self, y: np.ndarray) -> float:
        return self.abs_tol + self.rel_tol * self._scale(y)

    def _initial_step(self) -> float:
        # Hairer-Norsett-Wanner automatic initial step (simplified).
        k1 = self._k[0]
        tol = self._tol(self.y)
        d0 = float(np.linalg.norm(self.y))
        d1 = float(np.linalg.norm(k1))
        h0 = 1e-6 if d1 <= 1e-300 else 0.01 * max(d0, 1.0) / d1
        h0 = min(h0, self.max_step)
        y1 = self.y + h0 * k1
        f1 = np.asarray(self.fun(self.t + h0, y1), dtype=float)
        d2 = float(np.linalg.norm(f1 - k1)) / h0
        rate = max(d1, d2, 1e-300)
        h1 = (tol / rate) ** 0.2 if tol > 0 else h0
        return float(min(100.0 * h0, h1, self.max_step))

    def step(self, t_cap: float) -> None:
        """Advance one accepted step, never beyond ``t_cap``."""
        if t_cap <= self.t:
            raise ValueError("t_cap must exceed current time")
        while True:
            h = min(self.h, self.max_step)
            if h <= 16.0 * np.finfo(float).eps * max(abs(self.t), 1.0):
                raise StepSizeUnderflow(
                    self.t, f"step size underflow at t={self.t:.6g} (h={h:.3g})"
                )
            clipped = self.t + h >= t_cap
            if clipped:
                h = t_cap - self.t

            k = self._k
            for i in range(1, 6):
                yi = self.y + h * (k[:i].T @ _A[i])
                k[i] = self.fun(self.t + _C[i] * h, yi)
            y_new = self.y + h * (k[:6].T @ _A[6])
            k[6] = self.fun(self.t + h, y_new)  # FSAL
            err = abs(h) * float(np.linalg.norm(k.T @ _E))
            tol = self._tol(y_new)
            ratio = err / tol if tol > 0 else np.inf

            if ratio <= 1.0:
                self.t = t_cap if clipped else self.t + h
                self.y = y_new
                k[0] = k[6]
                self.n_accepted += 1
                r = max(ratio, 1e-10)
                factor = _SAFETY * r ** (-_ALPHA) * self._err_prev**_BETA
                self._err_prev = r
                h_next = h * min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
                # a clipped step must not shrink the controller's plan
                self.h = max(self.h, h_next) if clipped else h_next
                return
            self.n_rejected += 1
            self.h = h * max(_MIN_FACTOR, _SAFETY * ratio**-0.2)

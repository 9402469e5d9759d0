"""Weighted nonlinear least squares (Levenberg-Marquardt) with analytic Jacobians."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


class FitError(RuntimeError):
    """A fit could not produce a usable estimate."""


class RankDeficientError(FitError):
    """The Jacobian at the solution does not have full column rank."""


class ModelMismatchError(FitError):
    """The data are not described by the requested model."""


@dataclass(frozen=True)
class CurveModel:
    """A parametric curve ``f(x, params)`` and its Jacobian ``d f / d params``.

    ``jac`` returns an array of shape ``(len(x), len(params))``.
    """

    name: str
    param_names: tuple
    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def __call__(self, x, params):
        return self.func(np.asarray(x, dtype=float), np.asarray(params, dtype=float))


@dataclass
class NlsResult:
    model: str
    param_names: tuple
    params: np.ndarray
    covariance: np.ndarray
    residual: float  # weighted sum of squared residuals
    n_points: int
    n_iterations: int
    converged: bool
    message: str = ""

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def dof(self) -> int:
        return self.n_points - len(self.params)

    def as_dict(self) -> dict:
        return dict(zip(self.param_names, map(float, self.params)))

    def to_json_dict(self) -> dict:
        return {
            "model": self.model,
            "parameters": self.as_dict(),
            "covariance": [float(v) for v in np.asarray(self.covariance).ravel()],
            "residual": float(self.residual),
            "converged": bool(self.converged),
            "n_iterations": int(self.n_iterations),
        }


def nls_fit(model: CurveModel, x, y, init, weights=None, *, absolute_sigma: bool = True,
            xtol: float = 1e-10, max_iter: int = 200) -> NlsResult:
    """Minimise ``sum(w * (y - f(x, p))**2)`` by damped Gauss-Newton steps.

    Parameters
    ----------
    model : CurveModel
    x, y : array_like
        Abscissae and observations. ``x`` may carry extra columns that the
        model understands (e.g. a branch index).
    init : sequence of float
        Starting parameters.
    weights : array_like, optional
        Positive weights, normally ``1 / sigma**2``. Defaults to ones.
    absolute_sigma : bool
        If False, the covariance ``(J^T W J)^-1`` is rescaled by the reduced
        chi-square (appropriate when weights are only relative).

    Returns
    -------
    NlsResult
        ``converged`` is False when ``max_iter`` steps did not reach a relative
        parameter change below ``xtol``; the best parameters so far are kept.

    Raises
    ------
    RankDeficientError
        If ``J^T W J`` is singular at the solution.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = np.array(init, dtype=float)
    n = y.size
    if n < p.size:
        raise FitError(f"{model.name}: {n} points for {p.size} parameters")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != y.shape or np.any(~(w > 0)):
        raise FitError(f"{model.name}: weights must be positive and match the data")
    sw = np.sqrt(w)

    def sse_of(params):
        r = (y - model.func(x, params)) * sw
        return float(r @ r), r

    sse, r = sse_of(p)
    if not math.isfinite(sse):
        raise FitError(f"{model.name}: model not finite at the starting point")
    mu = 1e-3
    converged = False
    message = "maximum number of iterations reached"
    it = 0
    for it in range(1, max_iter + 1):
        J = model.jac(x, p) * sw[:, None]
        g = J.T @ r
        H = J.T @ J
        d = np.diag(H).copy()
        d[d <= 0] = 1e-300
        if not np.any(g) and sse == 0.0:
            converged, message = True, "exact fit"
            break
        accepted = False
        while mu < 1e20:
            try:
                step = np.linalg.solve(H + mu * np.diag(d), g)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            trial = p + step
            sse_t, r_t = sse_of(trial)
            if math.isfinite(sse_t) and sse_t <= sse:
                accepted = True
                break
            mu *= 10.0
        if not accepted:
            # no descent direction left at working precision
            converged, message = True, "stationary point"
            break
        small = np.all(np.abs(step) <= xtol * (np.abs(trial) + xtol))
        p, sse, r = trial, sse_t, r_t
        mu = max(mu / 10.0, 1e-15)
        if small:
            converged, message = True, "relative parameter change below tolerance"
            break

    J = model.jac(x, p) * sw[:, None]
    H = J.T @ J
    cov = _invert_normal(H, model.name)
    if not absolute_sigma:
        dof = n - p.size
        scale = sse / dof if dof > 0 else np.nan
        cov = cov * scale
    return NlsResult(model.name, tuple(model.param_names), p, cov, sse, n, it, converged, message)


def _invert_normal(H: np.ndarray, name: str) -> np.ndarray:
    scale = np.sqrt(np.diag(H))
    if np.any(scale == 0) or not np.all(np.isfinite(scale)):
        raise RankDeficientError(f"{name}: a parameter has no influence on the model")
    Hs = H / np.outer(scale, scale)
    if np.linalg.cond(Hs) > 1e13:
        raise RankDeficientError(f"{name}: Jacobian is rank deficient at the solution")
    return np.linalg.inv(Hs) / np.outer(scale, scale)


def numeric_jacobian(model: CurveModel, x, params, rel_step: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian, used to check analytic ones."""
    x = np.asarray(x, dtype=float)
    params = np.asarray(params, dtype=float)
    cols = []
    for k in range(params.size):
        h = rel_step * max(abs(params[k]), 1e-3)
        up = params.copy()
        dn = params.copy()
        up[k] += h
        dn[k] -= h
        cols.append((model.func(x, up) - model.func(x, dn)) / (2 * h))
    return np.stack(cols, axis=-1)

"""Scalar diffusion models with gradient-form drift.

Each model bundles the drift potential A, the drift alpha = dA/dx, its
derivative, the global lower bound of (alpha^2 + alpha')/2, and range bounds
for the nonnegative Poisson rate

    phi(theta, x) = (alpha(theta, x)^2 + alpha'(theta, x)) / 2 - alpha_down(theta),

together with the unnormalized endpoint bias

    log_bias_h(theta, x0, xT, T) = A(theta, xT) - A(theta, x0) - (xT - x0)^2 / (2 T)

and its normalizing constant.  Models are classified by how phi can be
bounded: EA1 (globally), EA2 (on half-lines [b, inf)), EA3 (on compacts only).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from .errors import QuadratureError, SupportError, UnboundedRangeError

EA1, EA2, EA3 = "EA1", "EA2", "EA3"

_INF = math.inf


@dataclass(frozen=True)
class ModelSpec:
    """Immutable functional bundle describing one diffusion model.

    All hooks are pure functions of (theta, x) with x possibly an ndarray;
    the instance is safe to share across threads.
    """

    name: str
    ea_class: str
    param_dim: int
    param_lower: tuple  # open lower bound per parameter (positivity etc.)
    potential: Callable  # A(theta, x)
    drift: Callable  # alpha(theta, x) = dA/dx
    drift_deriv: Callable  # alpha'(theta, x)
    alpha_down: Callable  # theta -> global inf of (alpha^2 + alpha')/2
    range_bounds: Callable  # (theta, lo, hi) -> (m, M) for phi on [lo, hi]
    potential_theta_grad: Callable  # (theta, x) -> dA/dtheta, shape (param_dim,)
    phi_deriv: Optional[Callable] = None  # (theta, x) -> dphi/dx
    state_lower: float = -_INF  # open lower edge of the state support
    theta_check: Optional[Callable] = None  # extra support predicate on theta
    log_h0: Optional[Callable] = None  # optional initial density (free-x0 runs)

    def theta_ok(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.param_dim,):
            return False
        if not np.all(np.isfinite(theta)):
            return False
        if any(t <= lo for t, lo in zip(theta, self.param_lower)):
            return False
        if self.theta_check is not None and not self.theta_check(theta):
            return False
        return True

    def require_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if not self.theta_ok(theta):
            raise SupportError(f"theta {theta!r} outside support of model {self.name!r}")
        return theta

    def in_support(self, x) -> np.ndarray:
        return np.asarray(x) > self.state_lower


def phi(model: ModelSpec, theta, x):
    """Nonnegative Poisson rate (alpha^2 + alpha')/2 - alpha_down at x.

    Raises SupportError if any x lies outside the state support.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(model.in_support(x)):
        raise SupportError(f"state outside support of model {model.name!r}")
    a = model.drift(theta, x)
    ap = model.drift_deriv(theta, x)
    return 0.5 * (a * a + ap) - model.alpha_down(theta)


def phi_deriv(model: ModelSpec, theta, x):
    if model.phi_deriv is None:
        raise NotImplementedError(f"model {model.name!r} has no phi derivative hook")
    return model.phi_deriv(theta, x)


def phi_range_bounds(model: ModelSpec, theta, lo: float, hi: float):
    """Infimum and supremum of phi over [lo, hi] intersected with the support.

    lo may be -inf for EA2 models only on the upper side convention used here
    (hi = +inf allowed for EA2); EA3 models require both ends finite.
    Raises UnboundedRangeError when the model cannot bound phi on the range.
    """
    if not lo <= hi:
        raise ValueError("need lo <= hi")
    if lo == hi:
        v = float(phi(model, theta, lo))
        return v, v
    return model.range_bounds(theta, float(lo), float(hi))


def log_bias_h(model: ModelSpec, theta, x0: float, xT: float, T: float) -> float:
    """Unnormalized log endpoint bias; the normalizing constant is log_c."""
    if T <= 0:
        raise ValueError("need T > 0")
    if not (model.in_support(x0) and model.in_support(xT)):
        raise SupportError("endpoint outside state support")
    d = xT - x0
    return float(model.potential(theta, xT) - model.potential(theta, x0) - d * d / (2.0 * T))


def log_bias_h_grad_x(model: ModelSpec, theta, x0: float, xT: float, T: float):
    """(d/dx0, d/dxT) of log_bias_h."""
    d = (xT - x0) / T
    return (-float(model.drift(theta, x0)) + d, float(model.drift(theta, xT)) - d)


def log_bias_h_grad_theta(model: ModelSpec, theta, x0: float, xT: float, T: float):
    g = np.asarray(model.potential_theta_grad(theta, xT), dtype=float)
    return g - np.asarray(model.potential_theta_grad(theta, x0), dtype=float)


# ---------------------------------------------------------------------------
# Normalizing constant of the endpoint bias
# ---------------------------------------------------------------------------


def _integrand_peak(model, theta, x0, T):
    """Locate the mode of g(u) = A(u) - A(x0) - (u - x0)^2 / 2T by coarse scan."""
    lo_edge = model.state_lower
    width = 15.0 * math.sqrt(T) + 5.0 * (1.0 + abs(x0))
    for _ in range(8):
        lo = x0 - width if lo_edge == -_INF else max(lo_edge + 1e-12, x0 - width)
        hi = x0 + width
        u = np.linspace(lo, hi, 2049)
        g = model.potential(theta, u) - model.potential(theta, x0) - (u - x0) ** 2 / (2 * T)
        k = int(np.argmax(g))
        if 0 < k < len(u) - 1 or (k == 0 and lo_edge > -_INF and u[0] - lo_edge < 1e-9):
            return u, g, k
        width *= 2.0
    raise QuadratureError(f"could not bracket the mode of the h integrand for {model.name!r}")


def log_c(model: ModelSpec, theta, x0: Optional[float], T: float,
          rtol: float = 1e-8, atol: float = 1e-12) -> float:
    """Log normalizing constant of the endpoint bias via adaptive quadrature.

    With x0 given, this is log of c_{theta,x0} = int exp(A(u) - A(x0)
    - (u-x0)^2/2T) du over the state support (the initial value treated as a
    point mass).  With x0 None the model must supply log_h0 and the double
    integral over both endpoints is computed.
    """
    theta = model.require_theta(theta)
    if x0 is None:
        return _log_c_free_x0(model, theta, T, rtol, atol)
    if not model.in_support(x0):
        raise SupportError("x0 outside state support")
    u, g, k = _integrand_peak(model, theta, x0, T)
    gmax = float(g[k])

    def f(v):
        gv = model.potential(theta, v) - model.potential(theta, x0) - (v - x0) ** 2 / (2 * T)
        return math.exp(gv - gmax)

    lo = model.state_lower if model.state_lower > -_INF else -np.inf
    peak = float(u[k])
    # split at the peak so the adaptive rule cannot miss a narrow mode
    v1, e1 = quad(f, lo, peak, limit=400, epsabs=atol, epsrel=rtol)
    v2, e2 = quad(f, peak, np.inf, limit=400, epsabs=atol, epsrel=rtol)
    val, err = v1 + v2, e1 + e2
    if not np.isfinite(val) or val <= 0 or err > max(atol, 10 * rtol * abs(val)):
        raise QuadratureError(
            f"h-normalization quadrature did not converge (value {val}, err {err})")
    return gmax + math.log(val)


def _log_c_free_x0(model, theta, T, rtol, atol):
    if model.log_h0 is None:
        raise SupportError(f"model {model.name!r} has no initial density; pass x0")

    def inner(u1):
        return math.exp(model.log_h0(u1) + log_c(model, theta, u1, T, rtol, atol))

    lo = model.state_lower if model.state_lower > -_INF else -np.inf
    val, err = quad(inner, lo, np.inf, limit=200, epsabs=atol, epsrel=math.sqrt(rtol))
    if not np.isfinite(val) or val <= 0:
        raise QuadratureError("free-x0 h-normalization quadrature failed")
    return math.log(val)


@lru_cache(maxsize=32)
def _gl_nodes(n: int):
    x, w = leggauss(n)
    return x, w


def log_c_and_theta_grad(model: ModelSpec, theta, x0: float, T: float, n: int = 160):
    """Fast fixed-node Gauss-Legendre evaluation of log_c and its theta gradient.

    Spectrally accurate for the smooth integrands of the built-in models;
    consistency with the adaptive route is covered by tests.  Returns
    (log_c, grad) with grad of shape (param_dim,).
    """
    theta = model.require_theta(theta)
    u, g, k = _integrand_peak(model, theta, x0, T)
    gmax = float(g[k])
    keep = np.flatnonzero(g >= gmax - 46.0)
    lo = u[max(keep[0] - 1, 0)]
    hi = u[min(keep[-1] + 1, len(u) - 1)]
    if model.state_lower > -_INF:
        lo = max(lo, model.state_lower + 1e-300)
    xg, wg = _gl_nodes(n)
    nodes = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
    scale = 0.5 * (hi - lo)
    gv = (model.potential(theta, nodes) - model.potential(theta, x0)
          - (nodes - x0) ** 2 / (2 * T))
    wexp = wg * np.exp(gv - gmax)
    total = float(wexp.sum()) * scale
    if total <= 0 or not np.isfinite(total):
        raise QuadratureError("Gauss-Legendre h-normalization failed")
    ggrad = np.asarray(model.potential_theta_grad(theta, nodes), dtype=float)
    if ggrad.ndim == 1:  # param_dim == 1 convenience
        ggrad = ggrad[None, :]
    dA_x0 = np.asarray(model.potential_theta_grad(theta, x0), dtype=float).reshape(-1)
    grad = (ggrad @ wexp) * scale / total - dA_x0
    return gmax + math.log(total), grad


# ---------------------------------------------------------------------------
# Concrete models
# ---------------------------------------------------------------------------


def _scalar_minimize(f, lo, hi, seeds: int = 64):
    """Multistart bounded minimization: coarse grid then local refinement."""
    x = np.linspace(lo, hi, seeds)
    fx = np.array([f(v) for v in x])
    order = np.argsort(fx)[:4]
    best_x, best_f = None, np.inf
    for k in order:
        a = x[max(k - 1, 0)]
        b = x[min(k + 1, seeds - 1)]
        if a == b:
            continue
        res = minimize_scalar(f, bounds=(a, b), method="bounded",
                              options={"xatol": 1e-11})
        if res.fun < best_f:
            best_x, best_f = float(res.x), float(res.fun)
    return best_x, best_f


def _exp_drift_model() -> ModelSpec:
    """dX = p exp(-q X) dt + dW on R; phi = (p e^{-qx} - q/2)^2 / 2, EA2."""

    def A(th, x):
        p, q = th
        return -(p / q) * np.exp(-q * np.asarray(x, dtype=float))

    def alpha(th, x):
        p, q = th
        return p * np.exp(-q * np.asarray(x, dtype=float))

    def alpha_p(th, x):
        p, q = th
        return -p * q * np.exp(-q * np.asarray(x, dtype=float))

    def a_down(th):
        _, q = th
        return -q * q / 8.0

    def _phi(th, x):
        p, q = th
        return 0.5 * (p * np.exp(-q * np.asarray(x, dtype=float)) - q / 2.0) ** 2

    def phi_d(th, x):
        p, q = th
        e = p * np.exp(-q * np.asarray(x, dtype=float))
        return (e - q / 2.0) * (-q * e)

    def bounds(th, lo, hi):
        p, q = th
        if lo == -_INF:
            raise UnboundedRangeError("phi unbounded as x -> -inf for exp-drift model")
        asym = q * q / 8.0
        x_zero = math.log(2.0 * p / q) / q  # phi's root and global minimum
        if hi == _INF:
            big = max(float(_phi(th, lo)), asym)
        else:
            big = max(float(_phi(th, lo)), float(_phi(th, hi)))
        if lo <= x_zero <= hi:
            small = 0.0
        elif hi < x_zero:
            small = float(_phi(th, hi))  # decreasing branch
        else:
            small = float(_phi(th, lo))  # increasing branch
        return small, big

    def A_grad(th, x):
        p, q = th
        x = np.asarray(x, dtype=float)
        e = np.exp(-q * x)
        return np.stack([-e / q, p * e * (1.0 / (q * q) + x / q)])

    return ModelSpec(
        name="exp_drift", ea_class=EA2, param_dim=2, param_lower=(0.0, 0.0),
        potential=A, drift=alpha, drift_deriv=alpha_p, alpha_down=a_down,
        range_bounds=bounds, potential_theta_grad=A_grad, phi_deriv=phi_d,
    )


@lru_cache(maxsize=256)
def _xexp_alpha_down(p: float, q: float) -> float:
    def g(x):
        a = -p * x * math.exp(-q * x)
        ap = p * math.exp(-q * x) * (q * x - 1.0)
        return 0.5 * (a * a + ap)

    # g -> 0 from x -> +inf and blows up as x -> -inf; the minimum sits at
    # moderate |x| on the 1/q scale.
    lo, hi = -40.0 / q - 10.0, 40.0 / q + 10.0
    _, val = _scalar_minimize(g, lo, hi)
    return min(val, 0.0)  # g(x) -> 0 at +inf, so the inf is never positive


def _xexp_drift_model() -> ModelSpec:
    """dX = -p X exp(-q X) dt + dW on R; alpha_down and bounds are numeric."""

    def A(th, x):
        p, q = th
        x = np.asarray(x, dtype=float)
        return (p / q) * (x + 1.0 / q) * np.exp(-q * x)

    def alpha(th, x):
        p, q = th
        x = np.asarray(x, dtype=float)
        return -p * x * np.exp(-q * x)

    def alpha_p(th, x):
        p, q = th
        x = np.asarray(x, dtype=float)
        return p * np.exp(-q * x) * (q * x - 1.0)

    def a_down(th):
        p, q = th
        return _xexp_alpha_down(float(p), float(q))

    def phi_d(th, x):
        p, q = th
        x = np.asarray(x, dtype=float)
        e = np.exp(-q * x)
        a = -p * x * e
        ap = p * e * (q * x - 1.0)
        app = p * q * e * (2.0 - q * x)
        return a * ap + 0.5 * app

    def g_of(th):
        p, q = th

        def g(x):
            e = math.exp(-q * x)
            a = -p * x * e
            return 0.5 * (a * a + p * e * (q * x - 1.0))

        return g

    def bounds(th, lo, hi):
        p, q = th
        if lo == -_INF:
            raise UnboundedRangeError("phi unbounded as x -> -inf for xexp-drift model")
        ad = a_down(th)
        g = g_of(th)
        # beyond x_flat the drift terms are numerically dead and g ~ 0
        x_flat = 46.0 / q + 46.0
        hi_eff = min(hi, max(x_flat, lo + 1.0))
        _, gmin = _scalar_minimize(g, lo, hi_eff)
        _, negmax = _scalar_minimize(lambda x: -g(x), lo, hi_eff)
        gmax = -negmax
        cand_min = [gmin, g(lo), g(hi_eff)]
        cand_max = [gmax, g(lo), g(hi_eff)]
        if hi == _INF or hi >= x_flat:
            cand_min.append(0.0)
            cand_max.append(0.0)
        return min(cand_min) - ad, max(cand_max) - ad

    def A_grad(th, x):
        p, q = th
        x = np.asarray(x, dtype=float)
        e = np.exp(-q * x)
        dAdp = (x / q + 1.0 / q**2) * e
        dAdq = -p * e * (x * x / q + 2.0 * x / q**2 + 2.0 / q**3)
        return np.stack([dAdp, dAdq])

    return ModelSpec(
        name="xexp_drift", ea_class=EA2, param_dim=2, param_lower=(0.0, 0.0),
        potential=A, drift=alpha, drift_deriv=alpha_p, alpha_down=a_down,
        range_bounds=bounds, potential_theta_grad=A_grad, phi_deriv=phi_d,
    )


def _double_well_model() -> ModelSpec:
    """dX = (-p X^3 + q X) dt + dW on R; EA3 with candidate-set bounds."""

    def A(th, x):
        p, q = th
        x = np.asarray(x, dtype=float)
        return -(p / 4.0) * x**4 + (q / 2.0) * x**2

    def alpha(th, x):
        p, q = th
        x = np.asarray(x, dtype=float)
        return -p * x**3 + q * x

    def alpha_p(th, x):
        p, q = th
        return -3.0 * p * np.asarray(x, dtype=float) ** 2 + q

    def a_down(th):
        p, q = th
        s = math.sqrt(q * q + 9.0 * p)
        return -q / 2.0 - s / 3.0 + q**3 / (27.0 * p) - q * q / (27.0 * p) * s

    def _g(th, x):
        p, q = th
        x2 = np.asarray(x, dtype=float) ** 2
        return 0.5 * (p * p * x2**3 - 2.0 * p * q * x2**2 + (q * q - 3.0 * p) * x2 + q)

    def phi_d(th, x):
        p, q = th
        x = np.asarray(x, dtype=float)
        return x * (3.0 * p * p * x**4 - 4.0 * p * q * x**2 + (q * q - 3.0 * p))

    def _stationary(th):
        p, q = th
        s = math.sqrt(q * q + 9.0 * p)
        pts = [0.0]
        y_plus = (2.0 * q + s) / (3.0 * p)
        pts += [math.sqrt(y_plus), -math.sqrt(y_plus)]
        if q * q > 3.0 * p:
            zeta = math.sqrt((2.0 * q - s) / (3.0 * p))
            pts += [zeta, -zeta]
        return pts

    def bounds(th, lo, hi):
        if lo == -_INF or hi == _INF:
            raise UnboundedRangeError("double-well phi needs a compact range")
        ad = a_down(th)
        cand = [lo, hi] + [c for c in _stationary(th) if lo <= c <= hi]
        vals = _g(th, np.array(cand)) - ad
        return float(vals.min()), float(vals.max())

    def A_grad(th, x):
        x = np.asarray(x, dtype=float)
        return np.stack([-(x**4) / 4.0, x**2 / 2.0])

    return ModelSpec(
        name="double_well", ea_class=EA3, param_dim=2, param_lower=(0.0, 0.0),
        potential=A, drift=alpha, drift_deriv=alpha_p, alpha_down=a_down,
        range_bounds=bounds, potential_theta_grad=A_grad, phi_deriv=phi_d,
    )


def cir_degree(theta) -> float:
    p, q, sigma = theta
    return 4.0 * p * q / (sigma * sigma)


def _cir_model() -> ModelSpec:
    """Lamperti-transformed CIR on (0, inf): X = 2 sqrt(V) / sigma.

    Requires degree d = 4 p q / sigma^2 >= 3, under which phi is bounded
    below on the support and the model is EA3.
    """

    def _c(th):
        p, q, sigma = th
        return 2.0 * p * q / (sigma * sigma) - 0.5

    def A(th, x):
        p = th[0]
        x = np.asarray(x, dtype=float)
        return _c(th) * np.log(x) - p * x**2 / 4.0

    def alpha(th, x):
        p = th[0]
        x = np.asarray(x, dtype=float)
        return _c(th) / x - p * x / 2.0

    def alpha_p(th, x):
        p = th[0]
        x = np.asarray(x, dtype=float)
        return -_c(th) / x**2 - p / 2.0

    def a_down(th):
        p = th[0]
        d = cir_degree(th)
        return p / 4.0 * (math.sqrt((d - 1.0) * (d - 3.0)) - d)

    def _a2(th):
        d = cir_degree(th)
        return (d - 1.0) * (d - 3.0) / 4.0

    def _phi(th, x):
        p = th[0]
        d = cir_degree(th)
        x = np.asarray(x, dtype=float)
        return (_a2(th) / (2.0 * x**2) + p * p * x**2 / 8.0
                - p / 4.0 * math.sqrt((d - 1.0) * (d - 3.0)))

    def phi_d(th, x):
        p = th[0]
        x = np.asarray(x, dtype=float)
        return -_a2(th) / x**3 + p * p * x / 4.0

    def bounds(th, lo, hi):
        p = th[0]
        if hi == _INF:
            raise UnboundedRangeError("CIR phi unbounded as x -> inf")
        if lo <= 0.0:
            raise UnboundedRangeError("CIR phi unbounded as x -> 0+")
        big = max(float(_phi(th, lo)), float(_phi(th, hi)))
        a2 = _a2(th)
        if a2 == 0.0:
            small = float(_phi(th, lo))
        else:
            x_star = (4.0 * a2 / (p * p)) ** 0.25
            if lo <= x_star <= hi:
                small = float(_phi(th, x_star))
            else:
                small = min(float(_phi(th, lo)), float(_phi(th, hi)))
        return small, big

    def A_grad(th, x):
        p, q, sigma = th
        x = np.asarray(x, dtype=float)
        lx = np.log(x)
        return np.stack([
            (2.0 * q / sigma**2) * lx - x**2 / 4.0,
            (2.0 * p / sigma**2) * lx,
            (-4.0 * p * q / sigma**3) * lx,
        ])

    return ModelSpec(
        name="cir", ea_class=EA3, param_dim=3, param_lower=(0.0, 0.0, 0.0),
        potential=A, drift=alpha, drift_deriv=alpha_p, alpha_down=a_down,
        range_bounds=bounds, potential_theta_grad=A_grad, phi_deriv=phi_d,
        state_lower=0.0, theta_check=lambda th: cir_degree(th) >= 3.0,
    )


def _sine_drift_model() -> ModelSpec:
    """dX = sin(X) dt + dW: (alpha^2 + alpha')/2 is globally bounded (EA1)."""

    def A(_, x):
        return -np.cos(np.asarray(x, dtype=float))

    def alpha(_, x):
        return np.sin(np.asarray(x, dtype=float))

    def alpha_p(_, x):
        return np.cos(np.asarray(x, dtype=float))

    def _g(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * (np.sin(x) ** 2 + np.cos(x))

    def a_down(_):
        return -0.5  # attained at cos x = -1

    def phi_d(_, x):
        x = np.asarray(x, dtype=float)
        return np.sin(x) * np.cos(x) - 0.5 * np.sin(x)

    def bounds(_, lo, hi):
        # stationary points of g: sin x (2 cos x - 1) = 0
        if hi - lo >= 2.0 * math.pi or lo == -_INF or hi == _INF:
            return 0.0, 9.0 / 8.0
        cand = [lo, hi]
        k_lo = math.floor(lo / math.pi) - 1
        k_hi = math.ceil(hi / math.pi) + 1
        for k in range(k_lo, k_hi + 1):
            cand.append(k * math.pi)
            cand.append(2.0 * k * math.pi + math.pi / 3.0)
            cand.append(2.0 * k * math.pi - math.pi / 3.0)
        cand = [c for c in cand if lo <= c <= hi]
        vals = _g(np.array(cand)) + 0.5
        return float(vals.min()), float(vals.max())

    def A_grad(_, x):
        return np.zeros((0, np.asarray(x).size))

    return ModelSpec(
        name="sine_drift", ea_class=EA1, param_dim=0, param_lower=(),
        potential=A, drift=alpha, drift_deriv=alpha_p, alpha_down=a_down,
        range_bounds=bounds, potential_theta_grad=A_grad, phi_deriv=phi_d,
    )


def _brownian_model() -> ModelSpec:
    """Zero drift: phi identically 0; degenerate EA1 reference model."""

    def zero(_, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    return ModelSpec(
        name="brownian", ea_class=EA1, param_dim=0, param_lower=(),
        potential=zero, drift=zero, drift_deriv=zero,
        alpha_down=lambda _: 0.0,
        range_bounds=lambda th, lo, hi: (0.0, 0.0),
        potential_theta_grad=lambda th, x: np.zeros((0, np.asarray(x).size)),
        phi_deriv=zero,
    )


_REGISTRY: dict[str, ModelSpec] = {}


def register_model(model: ModelSpec) -> None:
    _REGISTRY[model.name] = model


def get_model(name: str) -> ModelSpec:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(
            f"unknown model {name!r}; registered: {sorted(_REGISTRY)}") from None


def registered_models():
    return dict(_REGISTRY)


for _m in (_exp_drift_model(), _xexp_drift_model(), _double_well_model(),
           _cir_model(), _sine_drift_model(), _brownian_model()):
    register_model(_m)

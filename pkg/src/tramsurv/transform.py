"""Monotone transformations of time and the conditional distributions they induce.

Each parameterization builds a transformation h(t | x) that is strictly
increasing in t; composing it with the target family CDF yields the
conditional time-to-event distribution F(t | x) = F_Z(h(t | x)).  Covariates
enter through extractor features, either as an additive shift, a positive
scale, or (for the flexible variant) as the Bernstein coefficients
themselves.

``eval_transform``/``grad_transform`` are the two halves of a hand-written
reverse-mode pass: the gradient call chains upstream sensitivities of h and
dh/dt into head-parameter gradients and feature sensitivities, the latter to
be fed to the extractor's backward pass.
"""

from dataclasses import dataclass

import numpy as np

from . import feature, target
from .basis import (
    LogTimeScaler,
    bernstein_vectors,
    monotone_reparam,
    monotone_reparam_vjp,
)
from .core import FittedModel, ModelSpec, Parameterization
from .errors import DimensionMismatch, NonPositiveTime, ProbabilityOutOfRange
from .numerics import sigmoid, softplus, softplus_inv


@dataclass
class HeadParams:
    """Structured view of the transformation head parameters.

    Only the fields used by the parameterization at hand are set; the same
    container is also used for gradients, which share the structure.
    """

    a: float = 0.0
    b_raw: float = 0.0
    w: np.ndarray | None = None
    gamma: np.ndarray | None = None
    beta: np.ndarray | None = None


def head_layout(spec: ModelSpec) -> list[tuple[str, int]]:
    """Field names and sizes of the flat head vector, in storage order."""
    k = spec.bernstein_order + 1
    d = spec.extractor.output_dim if spec.extractor is not None else 0
    p = spec.parameterization
    if p == Parameterization.BASELINE:
        return [("gamma", k)]
    if p == Parameterization.LINEAR_SHIFT:
        return [("a", 1), ("b_raw", 1), ("w", d)]
    if p == Parameterization.LINEAR_SCALE:
        return [("a", 1), ("w", d)]
    if p == Parameterization.BERNSTEIN_SHIFT:
        return [("gamma", k), ("w", d)]
    if p == Parameterization.BERNSTEIN_SHIFT_SCALE:
        return [("gamma", k), ("w", d), ("beta", d)]
    return []  # bernstein_flexible: all parameters live in the extractor


def head_size(spec: ModelSpec) -> int:
    return sum(size for _, size in head_layout(spec))


def head_from_flat(spec: ModelSpec, flat: np.ndarray) -> HeadParams:
    flat = np.asarray(flat, dtype=float)
    if flat.shape != (head_size(spec),):
        raise DimensionMismatch(
            f"expected {head_size(spec)} head parameters, got shape {flat.shape}"
        )
    head = HeadParams()
    pos = 0
    for name, size in head_layout(spec):
        chunk = flat[pos : pos + size]
        pos += size
        setattr(head, name, float(chunk[0]) if name in ("a", "b_raw") else chunk)
    return head


def head_to_flat(spec: ModelSpec, head: HeadParams) -> np.ndarray:
    parts = []
    for name, size in head_layout(spec):
        value = getattr(head, name)
        parts.append(np.atleast_1d(np.asarray(value, dtype=float)))
    if not parts:
        return np.zeros(0)
    flat = np.concatenate(parts)
    if flat.shape != (head_size(spec),):
        raise DimensionMismatch("head fields do not match the model spec layout")
    return flat


def init_head(spec: ModelSpec) -> np.ndarray:
    """Deterministic head initialization as a flat vector.

    The scale parameter starts at softplus(b_raw) = 1, shifts at zero, and
    the Bernstein coefficients spread evenly over [-2, 2] so the initial
    transformation maps the observed range onto the bulk of the target
    distribution.
    """
    k = spec.bernstein_order
    head = HeadParams()
    head.b_raw = softplus_inv(1.0)
    if spec.extractor is not None:
        head.w = np.zeros(spec.extractor.output_dim)
        head.beta = np.zeros(spec.extractor.output_dim)
    head.gamma = np.full(k + 1, softplus_inv(4.0 / k))
    head.gamma[0] = -2.0
    return head_to_flat(spec, head)


def _check_times(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise NonPositiveTime("transformation times must be positive")
    return t


def _features_2d(features, t: np.ndarray) -> np.ndarray:
    """Broadcast features against times: one subject at many times, or rowwise."""
    f = np.asarray(features, dtype=float)
    if f.ndim == 1:
        return np.broadcast_to(f, (t.shape[0], f.shape[0]))
    if f.shape[0] != t.shape[0]:
        raise DimensionMismatch(
            f"{f.shape[0]} feature rows for {t.shape[0]} times"
        )
    return f


def eval_transform(
    spec: ModelSpec,
    head: HeadParams,
    features,
    t,
    scaler: LogTimeScaler,
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate h(t | x) and its time derivative dh/dt.

    ``features`` may be a single vector (evaluated at every time) or a matrix
    matched row by row against ``t``; the baseline parameterization ignores
    it.  Returns arrays shaped like ``t``.
    """
    t = _check_times(np.atleast_1d(t))
    p = spec.parameterization
    log_t = np.log(t)

    if p == Parameterization.LINEAR_SHIFT:
        f = _features_2d(features, t)
        b = softplus(head.b_raw)
        h = head.a + b * log_t + f @ head.w
        return h, np.full_like(t, b) / t

    if p == Parameterization.LINEAR_SCALE:
        f = _features_2d(features, t)
        c = softplus(f @ head.w)
        return head.a + c * log_t, c / t

    u = scaler.scale(log_t)
    basis_v, deriv_v = bernstein_vectors(spec.bernstein_order, u)
    du_dt = 1.0 / (scaler.span * t)

    if p == Parameterization.BASELINE:
        theta = monotone_reparam(head.gamma)
        return basis_v @ theta, (deriv_v @ theta) * du_dt

    if p == Parameterization.BERNSTEIN_SHIFT:
        f = _features_2d(features, t)
        theta = monotone_reparam(head.gamma)
        return basis_v @ theta + f @ head.w, (deriv_v @ theta) * du_dt

    if p == Parameterization.BERNSTEIN_SHIFT_SCALE:
        f = _features_2d(features, t)
        theta = monotone_reparam(head.gamma)
        scale = softplus(f @ head.beta)
        return scale * (basis_v @ theta) + f @ head.w, scale * (deriv_v @ theta) * du_dt

    # bernstein_flexible: extractor output becomes the coefficient vector per subject
    f = _features_2d(features, t)
    if f.shape[1] != spec.bernstein_order + 1:
        raise DimensionMismatch(
            "flexible parameterization needs extractor output of dimension order + 1"
        )
    theta = monotone_reparam(f)
    return np.sum(basis_v * theta, axis=-1), np.sum(deriv_v * theta, axis=-1) * du_dt


def grad_transform(
    spec: ModelSpec,
    head: HeadParams,
    features,
    t,
    scaler: LogTimeScaler,
    upstream_h,
    upstream_dhdt,
) -> tuple[HeadParams, np.ndarray]:
    """Chain upstream sensitivities of (h, dh/dt) into parameter gradients.

    Returns head gradients (summed over the batch, in a :class:`HeadParams`
    container) and per-row feature sensitivities ready for the extractor's
    backward pass.  Linear in the upstream arguments.
    """
    t = _check_times(np.atleast_1d(t))
    uh = np.broadcast_to(np.asarray(upstream_h, dtype=float), t.shape)
    ud = np.broadcast_to(np.asarray(upstream_dhdt, dtype=float), t.shape)
    p = spec.parameterization
    log_t = np.log(t)
    grad = HeadParams()

    if p == Parameterization.LINEAR_SHIFT:
        f = _features_2d(features, t)
        grad.a = float(np.sum(uh))
        grad.b_raw = float(sigmoid(head.b_raw) * np.sum(uh * log_t + ud / t))
        grad.w = f.T @ uh
        return grad, np.outer(uh, head.w)

    if p == Parameterization.LINEAR_SCALE:
        f = _features_2d(features, t)
        r = f @ head.w
        d_r = sigmoid(r) * (uh * log_t + ud / t)
        grad.a = float(np.sum(uh))
        grad.w = f.T @ d_r
        return grad, np.outer(d_r, head.w)

    u = scaler.scale(log_t)
    basis_v, deriv_v = bernstein_vectors(spec.bernstein_order, u)
    du_dt = 1.0 / (scaler.span * t)

    if p == Parameterization.BASELINE:
        d_theta = basis_v.T @ uh + deriv_v.T @ (ud * du_dt)
        grad.gamma = monotone_reparam_vjp(head.gamma, d_theta)
        return grad, np.zeros((t.shape[0], 0))

    if p == Parameterization.BERNSTEIN_SHIFT:
        f = _features_2d(features, t)
        d_theta = basis_v.T @ uh + deriv_v.T @ (ud * du_dt)
        grad.gamma = monotone_reparam_vjp(head.gamma, d_theta)
        grad.w = f.T @ uh
        return grad, np.outer(uh, head.w)

    if p == Parameterization.BERNSTEIN_SHIFT_SCALE:
        f = _features_2d(features, t)
        theta = monotone_reparam(head.gamma)
        base = basis_v @ theta
        base_deriv = (deriv_v @ theta) * du_dt
        r = f @ head.beta
        scale = softplus(r)
        d_theta = basis_v.T @ (uh * scale) + deriv_v.T @ (ud * scale * du_dt)
        d_r = sigmoid(r) * (uh * base + ud * base_deriv)
        grad.gamma = monotone_reparam_vjp(head.gamma, d_theta)
        grad.w = f.T @ uh
        grad.beta = f.T @ d_r
        return grad, np.outer(uh, head.w) + np.outer(d_r, head.beta)

    # bernstein_flexible
    f = _features_2d(features, t)
    d_theta = basis_v * uh[:, None] + deriv_v * (ud * du_dt)[:, None]
    return grad, monotone_reparam_vjp(f, d_theta)


def transform_at_log_time(
    spec: ModelSpec,
    head: HeadParams,
    features,
    u,
    scaler: LogTimeScaler,
) -> np.ndarray:
    """h as a function of log-time u = log t, for any real u.

    Working in log-time avoids exp overflow when the quantile bisection
    expands its bracket far beyond the observed range.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    p = spec.parameterization

    if p == Parameterization.LINEAR_SHIFT:
        f = _features_2d(features, u)
        return head.a + softplus(head.b_raw) * u + f @ head.w
    if p == Parameterization.LINEAR_SCALE:
        f = _features_2d(features, u)
        return head.a + softplus(f @ head.w) * u

    basis_v, _ = bernstein_vectors(spec.bernstein_order, scaler.scale(u))
    if p == Parameterization.BASELINE:
        return basis_v @ monotone_reparam(head.gamma)
    if p == Parameterization.BERNSTEIN_SHIFT:
        f = _features_2d(features, u)
        return basis_v @ monotone_reparam(head.gamma) + f @ head.w
    if p == Parameterization.BERNSTEIN_SHIFT_SCALE:
        f = _features_2d(features, u)
        scale = softplus(f @ head.beta)
        return scale * (basis_v @ monotone_reparam(head.gamma)) + f @ head.w
    f = _features_2d(features, u)
    return np.sum(basis_v * monotone_reparam(f), axis=-1)


# ---------------------------------------------------------------------------
# Conditional distributions


def _bisect_increasing(fn, targets: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Solve fn(u) = target for each target; fn is increasing and vectorized.

    Brackets are expanded geometrically from [lo, hi], then refined by plain
    bisection until the bracket width is at machine-level resolution.
    """
    targets = np.asarray(targets, dtype=float)
    lo = np.full_like(targets, lo)
    hi = np.full_like(targets, hi)
    step = np.maximum(hi - lo, 1.0)
    for _ in range(200):
        need = fn(lo) > targets
        if not np.any(need):
            break
        lo = np.where(need, lo - step, lo)
        step = np.where(need, step * 2.0, step)
    step = np.maximum(hi - lo, 1.0)
    for _ in range(200):
        need = fn(hi) < targets
        if not np.any(need):
            break
        hi = np.where(need, hi + step, hi)
        step = np.where(need, step * 2.0, step)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = fn(mid) < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 1e-12 * np.maximum(1.0, np.abs(mid))):
            break
    return 0.5 * (lo + hi)


class ConditionalDistribution:
    """Time-to-event distribution of a single subject under a fitted model.

    All evaluators accept scalars or arrays of times; boundary inputs t = 0
    and t = +inf map to the exact distribution limits.
    """

    def __init__(
        self,
        spec: ModelSpec,
        head: HeadParams,
        features: np.ndarray | None,
        scaler: LogTimeScaler,
    ):
        self.spec = spec
        self.head = head
        self.features = None if features is None else np.asarray(features, dtype=float)
        self.scaler = scaler

    def transform(self, t) -> tuple[np.ndarray, np.ndarray]:
        return eval_transform(self.spec, self.head, self.features, t, self.scaler)

    def _h(self, t: np.ndarray) -> np.ndarray:
        return self.transform(t)[0]

    def _apply(self, t, interior, at_zero: float, at_inf: float):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty_like(t_arr)
        zero = t_arr <= 0.0
        infinite = np.isposinf(t_arr)
        inside = ~zero & ~infinite
        out[zero] = at_zero
        out[infinite] = at_inf
        if np.any(inside):
            out[inside] = interior(t_arr[inside])
        return float(out[0]) if np.ndim(t) == 0 else out

    def cdf(self, t):
        return self._apply(
            t, lambda v: target.cdf(self.spec.family, self._h(v)), 0.0, 1.0
        )

    def survivor(self, t):
        return self._apply(
            t, lambda v: target.survivor(self.spec.family, self._h(v)), 1.0, 0.0
        )

    def log_cdf(self, t):
        return self._apply(
            t, lambda v: target.log_cdf(self.spec.family, self._h(v)), -np.inf, 0.0
        )

    def log_survivor(self, t):
        return self._apply(
            t, lambda v: target.log_survivor(self.spec.family, self._h(v)), 0.0, -np.inf
        )

    def log_pdf(self, t):
        def interior(v):
            h, dh_dt = self.transform(v)
            return target.log_density(self.spec.family, h) + np.log(dh_dt)

        return self._apply(t, interior, -np.inf, -np.inf)

    def pdf(self, t):
        return self._apply(
            t, lambda v: np.exp(self.log_pdf(v)), 0.0, 0.0
        )

    def quantile(self, p):
        """Inverse CDF by bracketed bisection on h(t) = F_Z^{-1}(p) in log-time."""
        p_arr = np.atleast_1d(np.asarray(p, dtype=float))
        z_target = target.quantile(self.spec.family, p_arr)
        u = _bisect_increasing(
            lambda v: transform_at_log_time(
                self.spec, self.head, self.features, v, self.scaler
            ),
            z_target,
            self.scaler.a_lo,
            self.scaler.b_hi,
        )
        t = np.exp(u)
        return float(t[0]) if np.ndim(p) == 0 else t


def conditional_distribution(model: FittedModel, x) -> ConditionalDistribution:
    """Build the conditional distribution of one subject from a fitted model."""
    spec = model.spec
    head = head_from_flat(spec, model.head_params)
    if not spec.uses_extractor:
        return ConditionalDistribution(spec, head, None, model.scaler)
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.extractor.input_dim,):
        raise DimensionMismatch(
            f"expected covariate vector of length {spec.extractor.input_dim}, got {x.shape}"
        )
    if (
        spec.parameterization == Parameterization.BERNSTEIN_FLEXIBLE
        and spec.extractor.output_dim != spec.bernstein_order + 1
    ):
        raise DimensionMismatch(
            "flexible parameterization needs extractor output of dimension order + 1"
        )
    features, _ = feature.forward(spec.extractor, model.extractor_params, x)
    return ConditionalDistribution(spec, head, features, model.scaler)

"""Backward heat kernels, their reflections across the boundary and cutoffs.

Points X live in R^{n+1} (base coordinates followed by the height). All
evaluators are vectorised over leading axes of X and return analytic first
and second space derivatives and the time derivative alongside values.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .domain import Domain, lift_matrix
from .errors import McflowError, TimeOrderViolation

logger = logging.getLogger(__name__)

# Diagnostics floor s - t here instead of overflowing
TAU_FLOOR = 1e-12

# Relative slack when fitting the reflection constant
FIT_RELATIVE_TOL = 1e-10


@dataclass(frozen=True)
class KernelSpec:
    """Pole (Y, s) and cutoff of the truncated kernels.

    The cutoff is 1 on B_{inner * R} and vanishes outside B_{outer * R}.
    """

    pole: NDArray[np.float64]
    s: float
    cutoff_radius: float
    inner_fraction: float = 1 / 16
    outer_fraction: float = 1 / 8

    def __post_init__(self):
        pole = np.array(self.pole, dtype=float).reshape(-1)
        object.__setattr__(self, "pole", pole)
        if pole.size < 2:
            raise McflowError("Kernel pole needs at least one base coordinate and a height")
        if not self.s > 0:
            raise McflowError(f"Terminal time must be positive, got {self.s}")
        if not (0 < self.cutoff_radius < math.inf):
            raise McflowError(f"Cutoff radius must be positive and finite, got {self.cutoff_radius}")
        if not 0 < self.inner_fraction < self.outer_fraction:
            raise McflowError("Cutoff fractions must satisfy 0 < inner < outer")

    @property
    def n(self) -> int:
        return self.pole.size - 1

    @property
    def base_pole(self) -> NDArray[np.float64]:
        return self.pole[:-1]

    def __hash__(self):
        return hash((tuple(self.pole), self.s, self.cutoff_radius))

    def __eq__(self, other):
        if not isinstance(other, KernelSpec):
            return NotImplemented
        return (
            np.array_equal(self.pole, other.pole)
            and self.s == other.s
            and self.cutoff_radius == other.cutoff_radius
            and self.inner_fraction == other.inner_fraction
            and self.outer_fraction == other.outer_fraction
        )


@dataclass(frozen=True)
class KernelValues:
    """A kernel branch with its analytic derivatives.

    ``grad`` is (..., n+1), ``hess`` is (..., n+1, n+1), ``value`` and
    ``dt`` are (...).
    """

    value: NDArray[np.float64]
    grad: NDArray[np.float64]
    hess: NDArray[np.float64]
    dt: NDArray[np.float64]

    def __add__(self, other: "KernelValues") -> "KernelValues":
        return KernelValues(
            self.value + other.value,
            self.grad + other.grad,
            self.hess + other.hess,
            self.dt + other.dt,
        )


@dataclass(frozen=True)
class TruncatedValues:
    """rho_1 = eta(X - Y) rho and rho_2 = eta(X~ - Y) rho~."""

    rho1: KernelValues
    rho2: KernelValues

    @property
    def total(self) -> KernelValues:
        return self.rho1 + self.rho2


@dataclass(frozen=True)
class ReflectionFit:
    """Smallest constant making the reflected-kernel margin nonpositive on a sample."""

    c8: float
    per_tau: dict[float, float] = field(default_factory=dict)
    sample_size: int = 0


# =============================================================================
# Cutoff
# =============================================================================


def cutoff(spec: KernelSpec, q: NDArray[np.float64]) -> tuple[NDArray, NDArray, NDArray]:
    """eta_R and its first two derivatives as functions of q = |Z|^2.

    eta = 1 - S(sigma), sigma = (q - a^2) / (b^2 - a^2) clipped to [0, 1],
    S the quintic smoothstep 10 s^3 - 15 s^4 + 6 s^5.
    """
    a2 = (spec.inner_fraction * spec.cutoff_radius) ** 2
    b2 = (spec.outer_fraction * spec.cutoff_radius) ** 2
    width = b2 - a2
    sigma = np.clip((np.asarray(q, dtype=float) - a2) / width, 0.0, 1.0)
    S = sigma**3 * (10 - 15 * sigma + 6 * sigma**2)
    dS = 30 * sigma**2 * (1 - sigma) ** 2
    d2S = 60 * sigma * (1 - sigma) * (1 - 2 * sigma)
    return 1.0 - S, -dS / width, -d2S / (width * width)


# =============================================================================
# Gaussian pieces
# =============================================================================


def _tau(spec: KernelSpec, t: float, floor: bool) -> float:
    tau = spec.s - float(t)
    if tau <= 0:
        if not floor:
            raise TimeOrderViolation(f"Kernel evaluated at t = {t} >= s = {spec.s}")
        logger.warning(f"s - t = {tau:.3g} floored at {TAU_FLOOR}")
        return TAU_FLOOR
    if floor and tau < TAU_FLOOR:
        logger.warning(f"s - t = {tau:.3g} floored at {TAU_FLOOR}")
        return TAU_FLOOR
    return tau


def _gaussian(
    n: int,
    g: NDArray[np.float64],
    Dg: NDArray[np.float64],
    D2g: NDArray[np.float64],
    tau: float,
    normalized: bool = False,
) -> KernelValues:
    """Kernel (4 pi tau)^{-n/2} exp(-g / 4 tau) with derivatives from g, Dg, D2g.

    With ``normalized`` every entry is divided by the kernel value, which
    keeps ratios finite where the Gaussian underflows.
    """
    if normalized:
        value = np.ones_like(g)
    else:
        value = (4 * np.pi * tau) ** (-n / 2) * np.exp(-g / (4 * tau))
    grad = -Dg / (4 * tau) * value[..., None]
    outer = Dg[..., :, None] * Dg[..., None, :]
    hess = (outer / (16 * tau * tau) - D2g / (4 * tau)) * value[..., None, None]
    dt = (n / (2 * tau) - g / (4 * tau * tau)) * value
    return KernelValues(value=value, grad=grad, hess=hess, dt=dt)


def _direct_pieces(spec: KernelSpec, X: NDArray[np.float64]):
    Z = np.asarray(X, dtype=float) - spec.pole
    g = np.sum(Z * Z, axis=-1)
    Dg = 2 * Z
    D2g = np.broadcast_to(2 * np.eye(spec.n + 1), Z.shape + (spec.n + 1,))
    return g, Dg, D2g


def _reflected_pieces(spec: KernelSpec, domain: Domain, X: NDArray[np.float64]):
    """g = |X~ - Y|^2 with its gradient and Hessian in X.

    With M = DX~ = I - 2 nu nu + 2Q (lifted with 1 on the height axis):
    Dg = 2 M (X~ - Y) and D2g_ij = 2 d_j M_ik (X~ - Y)_k + 2 (M M)_ij.
    """
    X = np.asarray(X, dtype=float)
    n = domain.dim
    if X.shape[-1] != n + 1 or spec.n != n:
        raise McflowError(f"Expected points in R^{n + 1} for a {n}-dimensional domain")
    data = domain.reflection_arrays(X[..., :n])
    reflected = np.concatenate([data.reflected, X[..., n:]], axis=-1)
    Z = reflected - spec.pole
    g = np.sum(Z * Z, axis=-1)

    nu = data.normal
    eye = np.eye(n)
    M = eye - 2 * nu[..., :, None] * nu[..., None, :] + 2 * data.Q
    Ml = lift_matrix(M, pad=1.0)
    # dM[..., i, k, j] = d_j M_ik
    dM = -2 * (
        data.dnormal[..., :, None, :] * nu[..., None, :, None]
        + nu[..., :, None, None] * data.dnormal[..., None, :, :]
    ) + 2 * data.dQ
    dMl = np.zeros(dM.shape[:-3] + (n + 1, n + 1, n + 1))
    dMl[..., :n, :n, :n] = dM

    Dg = 2 * np.einsum("...ki,...k->...i", Ml, Z)
    D2g = 2 * np.einsum("...ikj,...k->...ij", dMl, Z) + 2 * np.einsum("...ki,...kj->...ij", Ml, Ml)
    return g, Dg, D2g


def _apply_cutoff(
    spec: KernelSpec,
    kernel: KernelValues,
    g: NDArray[np.float64],
    Dg: NDArray[np.float64],
    D2g: NDArray[np.float64],
) -> KernelValues:
    """Product rule for eta(g) * kernel with eta a function of g."""
    eta, deta, d2eta = cutoff(spec, g)
    Deta = deta[..., None] * Dg
    D2eta = d2eta[..., None, None] * Dg[..., :, None] * Dg[..., None, :] + deta[..., None, None] * D2g
    cross = Deta[..., :, None] * kernel.grad[..., None, :]
    return KernelValues(
        value=eta * kernel.value,
        grad=eta[..., None] * kernel.grad + kernel.value[..., None] * Deta,
        hess=eta[..., None, None] * kernel.hess
        + cross
        + np.swapaxes(cross, -1, -2)
        + kernel.value[..., None, None] * D2eta,
        dt=eta * kernel.dt,
    )


# =============================================================================
# Operations
# =============================================================================


def eval_rho(spec: KernelSpec, X, t: float, floor: bool = False) -> KernelValues:
    """Backward heat kernel rho_(Y,s)(X, t) with analytic derivatives.

    Raises:
        TimeOrderViolation: If t >= s.
    """
    tau = _tau(spec, t, floor)
    g, Dg, D2g = _direct_pieces(spec, X)
    return _gaussian(spec.n, g, Dg, D2g, tau)


def eval_rho_tilde(
    spec: KernelSpec, domain: Domain, X, t: float, floor: bool = False, normalized: bool = False
) -> KernelValues:
    """Reflected kernel evaluated at X~ = (2 zeta(x) - x, x_{n+1}).

    Raises:
        TimeOrderViolation: If t >= s.
        PointTooDeep: If the base point is at distance >= R/2 from the boundary.
        OutsideDomain: If the base point is outside the domain.
    """
    tau = _tau(spec, t, floor)
    g, Dg, D2g = _reflected_pieces(spec, domain, X)
    return _gaussian(spec.n, g, Dg, D2g, tau, normalized=normalized)


def eval_truncated(
    spec: KernelSpec, domain: Domain, X, t: float, deep: str = "raise", floor: bool = False
) -> TruncatedValues:
    """Truncated kernels rho_1 and rho_2.

    Args:
        deep: "raise" propagates PointTooDeep for base points at distance
            >= R/2; "zero" sets rho_2 to zero there instead. The cutoff
            confines rho_2 to N_{R/8} for poles inside the domain.
    """
    X = np.asarray(X, dtype=float)
    tau = _tau(spec, t, floor)
    g, Dg, D2g = _direct_pieces(spec, X)
    rho1 = _apply_cutoff(spec, _gaussian(spec.n, g, Dg, D2g, tau), g, Dg, D2g)

    if deep == "raise":
        gt, Dgt, D2gt = _reflected_pieces(spec, domain, X)
        rho2 = _apply_cutoff(spec, _gaussian(spec.n, gt, Dgt, D2gt, tau), gt, Dgt, D2gt)
        return TruncatedValues(rho1=rho1, rho2=rho2)
    if deep != "zero":
        raise McflowError(f"Unknown deep-point policy: {deep}")

    n = spec.n
    batch = X.shape[:-1]
    value = np.zeros(batch)
    grad = np.zeros(batch + (n + 1,))
    hess = np.zeros(batch + (n + 1, n + 1))
    dt = np.zeros(batch)
    dist = domain.dist_to_boundary(X[..., :n])
    tube = dist < domain.R / 2
    if np.any(tube):
        gt, Dgt, D2gt = _reflected_pieces(spec, domain, X[tube])
        part = _apply_cutoff(spec, _gaussian(n, gt, Dgt, D2gt, tau), gt, Dgt, D2gt)
        value[tube] = part.value
        grad[tube] = part.grad
        hess[tube] = part.hess
        dt[tube] = part.dt
    return TruncatedValues(rho1=rho1, rho2=KernelValues(value, grad, hess, dt))


def identity_residual(kernel: KernelValues, w: NDArray[np.float64]) -> NDArray[np.float64]:
    """(w . D k)^2 / k + (I - w w) : D^2 k + d_t k."""
    w = np.asarray(w, dtype=float)
    wg = np.sum(w * kernel.grad, axis=-1)
    trace = np.trace(kernel.hess, axis1=-2, axis2=-1)
    whw = np.einsum("...i,...ij,...j->...", w, kernel.hess, w)
    return wg * wg / kernel.value + trace - whw + kernel.dt


def identity_scale(spec: KernelSpec, X, t: float) -> NDArray[np.float64]:
    """rho * max(1 / (s - t), |X - Y|^2 / (s - t)^2): magnitude of the identity's terms."""
    tau = _tau(spec, t, floor=False)
    Z = np.asarray(X, dtype=float) - spec.pole
    g = np.sum(Z * Z, axis=-1)
    rho = eval_rho(spec, X, t).value
    return rho * np.maximum(1 / tau, g / (tau * tau))


def huisken_identity_residual(spec: KernelSpec, X, t: float, w) -> NDArray[np.float64]:
    """Residual of the Huisken identity for the untruncated kernel (zero analytically).

    Raises:
        TimeOrderViolation: If t >= s.
        McflowError: If w is not a unit vector.
    """
    w = np.asarray(w, dtype=float)
    if np.any(np.abs(np.linalg.norm(w, axis=-1) - 1.0) > 1e-9):
        raise McflowError("Direction w must be a unit vector")
    return identity_residual(eval_rho(spec, X, t), w)


def worst_direction_residual(kernel: KernelValues) -> NDArray[np.float64]:
    """Maximum of identity_residual over unit w.

    The residual is w^T (a a^T / k - H) w + tr H + d_t k with a = D k, so
    its maximum is the top eigenvalue of a a^T / k - H plus the rest.
    """
    a = kernel.grad
    quad = a[..., :, None] * a[..., None, :] / kernel.value[..., None, None] - kernel.hess
    top = np.linalg.eigvalsh(quad)[..., -1]
    return top + np.trace(kernel.hess, axis1=-2, axis2=-1) + kernel.dt


def _check_pole_in_tube(spec: KernelSpec, domain: Domain) -> None:
    domain.reflection_arrays(spec.base_pole)


def reflected_inequality_margin(
    spec: KernelSpec, domain: Domain, X, t: float, w, c8: float
) -> NDArray[np.float64]:
    """Identity residual of rho~ minus c8 (|X~-Y|/(s-t) + |X~-Y|^3/(s-t)^2) rho~.

    Nonpositive for a suitable domain constant c8.
    """
    _check_pole_in_tube(spec, domain)
    tau = _tau(spec, t, floor=False)
    kernel = eval_rho_tilde(spec, domain, X, t)
    g, _, _ = _reflected_pieces(spec, domain, X)
    dist = np.sqrt(g)
    return identity_residual(kernel, w) - c8 * (dist / tau + dist**3 / tau**2) * kernel.value


def fit_reflection_constant(
    spec: KernelSpec, domain: Domain, points: NDArray[np.float64], taus
) -> ReflectionFit:
    """Smallest c8 with nonpositive margin over points, every unit w and every tau.

    The worst direction is taken in closed form, and all quantities are
    divided by rho~ first so far-field samples do not underflow.
    """
    _check_pole_in_tube(spec, domain)
    points = np.asarray(points, dtype=float)
    g, _, _ = _reflected_pieces(spec, domain, points)
    dist = np.sqrt(g)
    per_tau: dict[float, float] = {}
    for tau in taus:
        tau = float(tau)
        kernel = eval_rho_tilde(spec, domain, points, spec.s - tau, normalized=True)
        lhs = worst_direction_residual(kernel)
        slack = FIT_RELATIVE_TOL * (spec.n / tau + g / tau**2)
        numerator = np.maximum(lhs - slack, 0.0)
        denominator = dist / tau + dist**3 / tau**2
        ratio = np.divide(numerator, denominator, out=np.zeros_like(numerator), where=denominator > 0)
        per_tau[tau] = float(np.max(ratio, initial=0.0))
    c8 = max(per_tau.values(), default=0.0)
    logger.debug(f"Fitted reflection constant c8 = {c8:.6g} over {len(points)} points")
    return ReflectionFit(c8=c8, per_tau=per_tau, sample_size=len(points))

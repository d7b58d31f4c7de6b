"""
Exponential cubic B-spline basis.

B_m is written through truncated powers of G(w) = sinh(zeta*w) - zeta*w:

    B_m(x) = [G(2h - r) - lam * G(h - r)_+] / (2 D),   r = |x - x_m| <= 2h,

with D = zeta*h*cosh(zeta*h) - sinh(zeta*h) and lam = 2(1 + cosh(zeta*h)). Every
hyperbolic ratio is evaluated after dividing out its leading power of zeta*h, with a
Taylor branch below SERIES_THRESHOLD, so the basis stays accurate down to zeta*h ~ 1e-8
where the closed forms lose all digits to cancellation.
"""

import math
from functools import lru_cache

import numpy as np

from src.custom_exceptions import DomainError
from src.models import BasisConstants, SplinePieceCoefficients
from src.utils import logger


SERIES_THRESHOLD = 0.02
MAX_ZETA_H = 350.0


# --- Scaled hyperbolic ratios ---


def _sinh_remainder_series(w2):
    return 1 / 6 + w2 * (
        1 / 120 + w2 * (1 / 5040 + w2 * (1 / 362880 + w2 * (1 / 39916800 + w2 / 6227020800)))
    )


def _cosh_remainder_series(w2):
    return 1 / 2 + w2 * (
        1 / 24 + w2 * (1 / 720 + w2 * (1 / 40320 + w2 * (1 / 3628800 + w2 / 479001600)))
    )


def _sinh_ratio_series(w2):
    return 1.0 + w2 * (1 / 6 + w2 * (1 / 120 + w2 * (1 / 5040 + w2 / 362880)))


def _sinh_remainder(w: np.ndarray | float) -> np.ndarray:
    """(sinh w - w) / w**3."""
    w = np.asarray(w, dtype=float)
    small = np.abs(w) < SERIES_THRESHOLD
    safe = np.where(small, 1.0, w)
    closed = (np.sinh(safe) - safe) / safe**3
    return np.where(small, _sinh_remainder_series(w * w), closed)


def _cosh_remainder(w: np.ndarray | float) -> np.ndarray:
    """(cosh w - 1) / w**2."""
    w = np.asarray(w, dtype=float)
    small = np.abs(w) < SERIES_THRESHOLD
    safe = np.where(small, 1.0, w)
    closed = (np.cosh(safe) - 1.0) / safe**2
    return np.where(small, _cosh_remainder_series(w * w), closed)


def _sinh_ratio(w: np.ndarray | float) -> np.ndarray:
    """sinh w / w."""
    w = np.asarray(w, dtype=float)
    small = np.abs(w) < SERIES_THRESHOLD
    safe = np.where(small, 1.0, w)
    return np.where(small, _sinh_ratio_series(w * w), np.sinh(safe) / safe)


def _denominator_series(z: float) -> float:
    """(z cosh z - sinh z) / z**3 from its Taylor expansion."""
    z2 = z * z
    return 1 / 3 + z2 * (
        1 / 30 + z2 * (1 / 840 + z2 * (1 / 45360 + z2 * (1 / 3991680 + z2 / 518918400)))
    )


def _denominator_closed(z: float) -> float:
    return (z * math.cosh(z) - math.sinh(z)) / z**3


def _scaled_denominator(z: float) -> float:
    if z < SERIES_THRESHOLD:
        return _denominator_series(z)
    return _denominator_closed(z)


def _check_domain(zeta: float, h: float) -> float:
    if not (zeta > 0 and math.isfinite(zeta)):
        raise DomainError("Spline parameter zeta must be positive.", {"zeta": zeta})
    if not (h > 0 and math.isfinite(h)):
        raise DomainError("Grid spacing h must be positive.", {"h": h})
    z = zeta * h
    if z > MAX_ZETA_H:
        raise DomainError(
            "zeta*h is too large, hyperbolic terms overflow.", {"zeta_h": z}
        )
    return z


# --- Nodal constants ---


def _constants_closed_form(zeta: float, h: float) -> BasisConstants:
    z = zeta * h
    s = math.sinh(z)
    c = math.cosh(z)
    denominator = z * c - s
    alpha1 = (s - z) / (2.0 * denominator)
    beta1 = zeta * (1.0 - c) / (2.0 * denominator)
    gamma1 = zeta**2 * s / (2.0 * denominator)
    return BasisConstants(
        zeta=zeta,
        h=h,
        alpha1=alpha1,
        beta1=beta1,
        beta2=-beta1,
        gamma1=gamma1,
        gamma2=-2.0 * gamma1,
        series_branch=False,
    )


def _constants_series(zeta: float, h: float) -> BasisConstants:
    z = zeta * h
    twice_denominator = 2.0 * _denominator_series(z)
    z2 = z * z
    alpha1 = _sinh_remainder_series(z2) / twice_denominator
    beta1 = -_cosh_remainder_series(z2) / (twice_denominator * h)
    gamma1 = _sinh_ratio_series(z2) / (twice_denominator * h * h)
    return BasisConstants(
        zeta=zeta,
        h=h,
        alpha1=alpha1,
        beta1=beta1,
        beta2=-beta1,
        gamma1=gamma1,
        gamma2=-2.0 * gamma1,
        series_branch=True,
    )


@lru_cache(maxsize=128)
def compute_basis_constants(zeta: float, h: float) -> BasisConstants:
    """
    Nodal values alpha1, alpha2, beta1, beta2, gamma1, gamma2 for spline parameter zeta.

    Below zeta*h = SERIES_THRESHOLD the hyperbolic ratios come from Taylor series; the
    classical cubic B-spline values (1/4, -3/(4h), 3/(2h^2), -3/h^2) are the zeta -> 0 limit.

    Raises:
        DomainError: If zeta or h is not positive, or zeta*h overflows.
    """
    z = _check_domain(zeta, h)
    if z < SERIES_THRESHOLD:
        constants = _constants_series(zeta, h)
    else:
        constants = _constants_closed_form(zeta, h)
    logger.debug(
        f"Basis constants for zeta={zeta}, h={h}: alpha1={constants.alpha1:.12g}, "
        f"beta1={constants.beta1:.12g}, gamma1={constants.gamma1:.12g} "
        f"(series={constants.series_branch})"
    )
    return constants


@lru_cache(maxsize=128)
def compute_piece_coefficients(zeta: float, h: float) -> SplinePieceCoefficients:
    """Coefficients of the four spline pieces plus the scaled quantities used to evaluate them."""
    z = _check_domain(zeta, h)
    c = math.cosh(z)
    denominator = z * c - math.sinh(z)
    return SplinePieceCoefficients(
        zeta=zeta,
        h=h,
        a1=z * c / denominator,
        b1=-zeta * (1.0 + 2.0 * c) / (2.0 * denominator),
        b2=zeta / (2.0 * denominator),
        c1=(1.0 + 2.0 * math.exp(-z)) / (4.0 * denominator),
        d1=-(1.0 + 2.0 * math.exp(z)) / (4.0 * denominator),
        scaled_denominator=_scaled_denominator(z),
        tension=2.0 * (1.0 + c),
    )


# --- Evaluation ---


def basis_values(
    r: np.ndarray | float, coeffs: SplinePieceCoefficients
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    B, dB/dx and d2B/dx2 of a basis function at signed offsets r = x - x_m.

    Args:
        r: Offsets from the centre knot, any shape.
        coeffs: Piece coefficients for (zeta, h).

    Returns:
        Three arrays shaped like r; all zero where |r| >= 2h.
    """
    r = np.asarray(r, dtype=float)
    h = coeffs.h
    zeta = coeffs.zeta
    distance = np.abs(r)
    outer = np.clip(2.0 * h - distance, 0.0, None)
    inner = np.clip(h - distance, 0.0, None)
    twice_denominator = 2.0 * coeffs.scaled_denominator
    lam = coeffs.tension

    outer_ratio = outer / h
    inner_ratio = inner / h

    value = (
        outer_ratio**3 * _sinh_remainder(zeta * outer)
        - lam * inner_ratio**3 * _sinh_remainder(zeta * inner)
    ) / twice_denominator
    slope_in_r = (
        -(outer_ratio**2) * _cosh_remainder(zeta * outer)
        + lam * inner_ratio**2 * _cosh_remainder(zeta * inner)
    ) / (twice_denominator * h)
    curvature = (
        outer_ratio * _sinh_ratio(zeta * outer)
        - lam * inner_ratio * _sinh_ratio(zeta * inner)
    ) / (twice_denominator * h * h)
    return value, np.sign(r) * slope_in_r, curvature


def evaluate_bspline(
    m: int, x: float, coeffs: SplinePieceCoefficients, origin: float = 0.0
) -> tuple[float, float, float]:
    """
    Evaluate B_m, B_m' and B_m'' at x, where x_m = origin + m*h.

    Outside [x_{m-2}, x_{m+2}] the triple is (0, 0, 0).
    """
    centre = origin + m * coeffs.h
    value, slope, curvature = basis_values(x - centre, coeffs)
    return float(value), float(slope), float(curvature)


def evaluate_piecewise_closed_form(
    m: int, x: float, coeffs: SplinePieceCoefficients, origin: float = 0.0
) -> float:
    """
    B_m(x) straight from the exponential piece formulas with a1, b1, b2, c1, d1.

    Only well conditioned for moderate zeta*h; kept as the reference form of the basis.
    """
    h = coeffs.h
    zeta = coeffs.zeta
    centre = origin + m * h
    r = x - centre
    if abs(r) >= 2.0 * h:
        return 0.0
    if abs(r) >= h:
        # outer pieces, y = x - x_{m+2} on the right and its mirror on the left
        y = -(2.0 * h - abs(r))
        return coeffs.b2 * (y - math.sinh(zeta * y) / zeta)
    distance = abs(r)
    return (
        coeffs.a1
        + coeffs.b1 * distance
        + coeffs.c1 * math.exp(zeta * distance)
        + coeffs.d1 * math.exp(-zeta * distance)
    )

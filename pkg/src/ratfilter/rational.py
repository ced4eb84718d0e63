"""Scalar rational filters built from quadratures of the circular contour
integral, their composite factorisation, and separation-ratio analysis."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pencil import DiskRegion

NEAR_POLE = 1e-14


class NearPoleError(ArithmeticError):
    """Evaluation point within rounding distance of a filter pole."""


@dataclass(frozen=True, eq=False)
class PolesWeights:
    """R(z) = sum_i w_i / (p_i - z) for one quadrature rule on a circle."""

    rule: str
    center: complex
    radius: float
    k: int
    poles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if len(self.poles) != self.k or len(self.weights) != self.k:
            raise ValueError("need exactly k poles and k weights")

    @property
    def region(self):
        return DiskRegion(self.center, self.radius)

    def __call__(self, z):
        """Sum-form evaluation, vectorised over z; exact pole hits give nan."""
        z = np.asarray(z, dtype=complex)
        diff = self.poles[:, None] - z.ravel()[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = self.weights[:, None] / diff
        out = terms.sum(axis=0)
        out[np.any(diff == 0, axis=0)] = np.nan
        return out.reshape(z.shape)


def trapezoid_angles(k):
    return 2.0 * (np.arange(1, k + 1) - 0.5) * np.pi / k


def trapezoid_rule(region, k):
    """Equispaced poles c + r e^{i theta_i}, theta_i = 2 (i - 1/2) pi / k."""
    if k < 1:
        raise ValueError("k must be at least 1")
    e = np.exp(1j * trapezoid_angles(k))
    poles = region.center + region.radius * e
    weights = region.radius * e / k
    return PolesWeights("trapezoid", region.center, region.radius, k, poles, weights)


def gauss_rule(region, k):
    """k/2-point Gauss-Legendre on each of the upper and lower semicircles."""
    if k < 2 or k % 2:
        raise ValueError("gauss rule needs an even k >= 2")
    x, omega = np.polynomial.legendre.leggauss(k // 2)
    theta = 0.5 * np.pi * (x + 1.0)
    theta = np.concatenate([theta, theta + np.pi])
    omega = np.concatenate([omega, omega])
    e = np.exp(1j * theta)
    poles = region.center + region.radius * e
    # (1 / 2 pi i) * (d zeta / d theta) * (pi / 2) * omega
    weights = region.radius * e * omega / 4.0
    return PolesWeights("gauss", region.center, region.radius, k, poles, weights)


def _check_poles(region, k, z):
    y = (np.asarray(z, dtype=complex) - region.center) / region.radius
    # distance to the nearest k-th root of -1, measured along the unit circle scale
    ang = np.angle(y) * k / (2 * np.pi) - 0.5
    nearest = np.exp(2j * np.pi * (np.round(ang) + 0.5) / k)
    if np.any(np.abs(y - nearest) < NEAR_POLE):
        raise NearPoleError(f"evaluation point within {NEAR_POLE:g} r of a pole of R_{k}")
    return y


def eval_compact(region, k, z):
    """1 / (1 + ((z - c) / r)^k)."""
    y = _check_poles(region, k, z)
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + y ** k)
    return complex(out) if np.ndim(out) == 0 else out


def mobius_T(z):
    """(1 - z) / z, the transform with T(R_k(z)) = z^k."""
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        raise ZeroDivisionError("T has a pole at 0 (image is the point at infinity)")
    out = (1.0 - z) / z
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class CompositeCoeffs:
    """R_{k1 k2} = sum_i c_i (R_{k1} - s_i)^{-1} R_{k1} + direct_term * R_{k1}."""

    k2: int
    roots: np.ndarray
    shifts: np.ndarray
    weights: np.ndarray
    direct_term: complex


def composite_coeffs(k2):
    if k2 < 1:
        raise ValueError("k2 must be at least 1")
    sigma = np.exp(1j * trapezoid_angles(k2))
    if k2 % 2:
        # sigma = -1 sits at the middle index; its term collapses to R_{k1} / k2
        sigma = np.delete(sigma, k2 // 2)
        direct = 1.0 / k2
    else:
        direct = 0.0
    shifts = 1.0 / (1.0 + sigma)
    weights = sigma / (k2 * (1.0 + sigma))
    return CompositeCoeffs(k2, sigma, shifts, weights, complex(direct))


def eval_composite(region, k1, k2, z):
    inner = np.asarray(eval_compact(region, k1, z), dtype=complex)
    cc = composite_coeffs(k2)
    out = cc.direct_term * inner
    for c, s in zip(cc.weights, cc.shifts):
        gap = inner - s
        if np.any(np.abs(gap) < NEAR_POLE * max(1.0, abs(s))):
            raise NearPoleError("inner filter value coincides with an outer shift")
        out = out + c * inner / gap
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PoleMapping:
    value: complex
    shift_index: int | None
    distance: float
    excluded: bool


def pole_mapping_check(region, k1, k2, pole_index):
    """Image of the pole_index-th pole of R_{k1 k2} under R_{k1}.

    Odd k2 poles that land on the excluded root sigma = -1 map to infinity;
    they are reported with ``excluded=True`` and distance 0.
    """
    pole = trapezoid_rule(region, k1 * k2).poles[pole_index]
    y = (pole - region.center) / region.radius
    den = 1.0 + y ** k1
    if abs(den) < 1e-12:
        return PoleMapping(complex(np.inf), None, 0.0, True)
    value = 1.0 / den
    shifts = composite_coeffs(k2).shifts
    if shifts.size == 0:
        return PoleMapping(value, None, float("inf"), False)
    d = np.abs(shifts - value)
    j = int(np.argmin(d))
    return PoleMapping(value, j, float(d[j]), False)


# ---------------------------------------------------------------- separation ratios

def separation_ratio_closed(a, b, k):
    if not 0 < a < b:
        raise ValueError("need 0 < a < b")
    return 2.0 / ((b / a) ** k - 1.0)


def optimal_ratio(a, b, k):
    if not 0 < a < b:
        raise ValueError("need 0 < a < b")
    return (a / b) ** k


def default_half_width(b):
    return max(1.5, 1.25 * b)


def separation_ratio_grid(pw, a, b, grid_n, half_width=None):
    """sup_{|z-c| >= b} |R| / inf_{|z-c| <= a} |R| over a square grid around c.

    Points that hit a pole are skipped.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    if not 0 < a < b:
        raise ValueError("need 0 < a < b")
    hw = default_half_width(b) if half_width is None else half_width
    t = np.linspace(-hw, hw, grid_n)
    Z = t[None, :] + 1j * t[:, None]
    dist = np.abs(Z)
    vals = np.abs(pw(pw.center + Z))
    ok = np.isfinite(vals)
    inner = vals[(dist <= a) & ok]
    outer = vals[(dist >= b) & ok]
    if inner.size == 0 or outer.size == 0:
        raise ValueError("grid does not reach both sides of the annulus")
    return float(outer.max() / inner.min())


def filter_map(func, center=0.0, half_width=1.5, grid_n=201):
    """(re, im, |R|) columns of func sampled on a square grid around center."""
    t = np.linspace(-half_width, half_width, grid_n)
    Z = center + t[None, :] + 1j * t[:, None]
    vals = np.abs(func(Z))
    return Z.real.ravel(), Z.imag.ravel(), vals.ravel()


# ---------------------------------------------------------------- Zolotarev reference

@dataclass(frozen=True)
class ZolotarevParams:
    a: float
    b: float
    ell: float
    gamma: float
    alpha: float
    beta: float


def zolotarev_params(a, b):
    if not 0 < a < b:
        raise ValueError("need 0 < a < b")
    sa, sb = np.sqrt(a), np.sqrt(b)
    gamma = (sb - sa) / (sb + sa)
    alpha = float(np.sqrt(a * b))
    return ZolotarevParams(a, b, gamma ** 2, gamma, alpha, -alpha)


def zolotarev_function(params, k, w):
    """((w - sqrt(l)) / (w + sqrt(l)))^k, optimal for separating S from -S."""
    sl = np.sqrt(params.ell)
    w = np.asarray(w, dtype=complex)
    if np.any(w == -sl):
        raise NearPoleError("pole of the Zolotarev function")
    out = ((w - sl) / (w + sl)) ** k
    return complex(out) if out.ndim == 0 else out


def zolotarev_map(params, z):
    """Moebius map sending -b, -a, a, b to 1, -1, -l, l."""
    z = np.asarray(z, dtype=complex)
    if np.any(z == params.beta):
        raise NearPoleError("pole of the annulus map")
    out = params.gamma * (z - params.alpha) / (z - params.beta)
    return complex(out) if out.ndim == 0 else out


def zolotarev_eval(params, k, z):
    """Zolotarev function composed with the annulus map, normalised to z^{-k}.

    The raw composition equals (-sqrt(ab) / z)^k; dividing out (-sqrt(ab))^k
    leaves the optimal separator (1/z)^k.
    """
    raw = zolotarev_function(params, k, zolotarev_map(params, z))
    return raw / (-params.alpha) ** k


def zolotarev_infimum(params, k):
    sl = np.sqrt(params.ell)
    return float(((1 + sl) / (1 - sl)) ** (-2 * k))

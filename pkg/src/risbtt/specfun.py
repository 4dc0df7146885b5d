"""
Special functions and quadrature for the analytic link model.

Everything here is a pure function of its arguments.

  ln_gamma              Lanczos (g=7, n=9), recurrence below 1/2, Taylor series near 1 and 2
  reg_lower_inc_gamma   series for x < k+1, modified Lentz continued fraction otherwise
  q_function            1/2 erfc(x/sqrt 2), vectorised
  integrate             adaptive Gauss-Kronrod (7/15) with a global error heap
  expect_under_gamma    E[f(G)] for G ~ Gamma(k, theta)
  meijer_g_ber          G^{2,1}_{2,2}(theta | 1-k, 1; 0, 1/2) / (2 sqrt(pi) Gamma(k))
  meijer_g_ac           G^{1,3}_{3,2}(theta | 1-k, 1, 1; 1, 0) / (Gamma(k) ln 2)

The two Meijer-G instances are evaluated as Mellin-Barnes integrals along a
vertical line Re s = c, folded onto t >= 0 by conjugate symmetry:

    G = (1/pi) * integral_0^inf Re F(c + i t) dt
"""

from __future__ import annotations

import heapq
import itertools
import math
import sys
from dataclasses import replace
from typing import Callable, Iterable, Union, overload

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import erfc, zeta

from .errors import DomainError, NonConvergenceError
from .metrics import METRICS
from .models import QuadSpec

Integrand = Callable[[NDArray[np.float64]], ArrayLike]

_EPS = sys.float_info.epsilon
_LN_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_LN_2SQRTPI = math.log(2.0 * math.sqrt(math.pi))

# ----- Lanczos coefficients (g = 7, n = 9) -----

_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)

# ----- Taylor series of ln Gamma(1 + t) -----

_ROOT_BAND = 0.2
_EULER = 0.57721566490153286061
_ZETA_SERIES = tuple(float(zeta(j)) for j in range(2, 30))

# ----- Gauss-Kronrod 7/15 nodes and weights (QUADPACK qk15) -----

_XGK = np.array(
    [
        0.991455371120812639206854697526329,
        0.949107912342758524526189684047851,
        0.864864423359769072789712788640926,
        0.741531185599394439863864773280788,
        0.586087235467691130294144845693013,
        0.405845151377397166906606412076961,
        0.207784955007898467600689403773245,
        0.000000000000000000000000000000000,
    ]
)
_WGK = np.array(
    [
        0.022935322010529224963732008058970,
        0.063092092629978553290700663189204,
        0.104790010322250183839876322541518,
        0.140653259715525918745189590510238,
        0.169004726639267902826583426598550,
        0.190350578064785409913256402421014,
        0.204432940075298892414161999234649,
        0.209482141084727828012999174891714,
    ]
)
_WG = np.array(
    [
        0.129484966168869693270611432679082,
        0.279705391489276667901467771423780,
        0.381830050505118944950369775488975,
        0.417959183673469387755102040816327,
    ]
)

_NODES = np.concatenate([-_XGK[:7], _XGK[:7], _XGK[7:]])
_W_KRONROD = np.concatenate([_WGK[:7], _WGK[:7], _WGK[7:]])
_G_HALF = np.array([0.0, _WG[0], 0.0, _WG[1], 0.0, _WG[2], 0.0])
_W_GAUSS = np.concatenate([_G_HALF, _G_HALF, _WG[3:]])

_MAX_PANELS = 5000
# Tail of the contour integrand (relative to its value on the real axis) that is dropped.
_CONTOUR_CUTOFF = 1e-18
_CONTOUR_T_MAX = 200.0


# ----- Gamma function -----


def ln_gamma(x: float) -> float:
    """Natural log of the gamma function for real x > 0.

    Raises:
        DomainError: if x <= 0 or x is not finite.
    """
    if not (x > 0 and math.isfinite(x)):
        raise DomainError(f"ln_gamma needs x > 0, got {x}")
    # ln Gamma vanishes at 1 and 2; the Taylor series keeps relative accuracy there
    if abs(x - 1.0) <= _ROOT_BAND:
        return _ln_gamma_near_one(x - 1.0)
    if abs(x - 2.0) <= _ROOT_BAND:
        return math.log1p(x - 2.0) + _ln_gamma_near_one(x - 2.0)
    if x < 0.5:
        # Gamma(x) = Gamma(x + 1) / x
        return _ln_gamma_lanczos(x + 1.0) - math.log(x)
    return _ln_gamma_lanczos(x)


def _ln_gamma_near_one(t: float) -> float:
    # ln Gamma(1 + t) = -euler t + sum_{j>=2} (-1)^j zeta(j) t^j / j, |t| <= _ROOT_BAND
    acc = 0.0
    power = -t
    for j, coeff in enumerate(_ZETA_SERIES, start=2):
        power *= -t
        acc += coeff * power / j
    return -_EULER * t + acc


def _ln_gamma_lanczos(x: float) -> float:
    z = x - 1.0
    acc = _LANCZOS[0]
    for i in range(1, len(_LANCZOS)):
        acc += _LANCZOS[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _LN_SQRT_2PI + (z + 0.5) * math.log(t) - t + math.log(acc)


def _ln_gamma_complex(z: NDArray[np.complex128]) -> NDArray[np.complex128]:
    """Log-gamma on complex arguments with Re z > 0.

    The imaginary part is only defined modulo 2 pi; callers exponentiate.
    """
    shift = max(0, math.ceil(0.5 - float(np.min(z.real))))
    acc_log = np.zeros_like(z)
    for j in range(shift):
        acc_log -= np.log(z + j)
    w = z + shift - 1.0
    acc = np.full_like(z, _LANCZOS[0])
    for i in range(1, len(_LANCZOS)):
        acc += _LANCZOS[i] / (w + i)
    t = w + _LANCZOS_G + 0.5
    out: NDArray[np.complex128] = acc_log + _LN_SQRT_2PI + (w + 0.5) * np.log(t) - t + np.log(acc)
    return out


# ----- Incomplete gamma -----


def reg_lower_inc_gamma(k: float, x: float) -> float:
    """Regularized lower incomplete gamma P(k, x) = gamma(k, x) / Gamma(k).

    Raises:
        DomainError: if k <= 0 or x < 0.
        NonConvergenceError: if the series or continued fraction does not settle.
    """
    if not (k > 0 and math.isfinite(k)):
        raise DomainError(f"reg_lower_inc_gamma needs k > 0, got {k}")
    if not x >= 0:
        raise DomainError(f"reg_lower_inc_gamma needs x >= 0, got {x}")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    max_iter = int(100 + 50 * math.sqrt(max(k, x)))
    log_prefactor = -x + k * math.log(x) - ln_gamma(k)
    if x < k + 1.0:
        return min(1.0, _inc_gamma_series(k, x, log_prefactor, max_iter))
    return max(0.0, 1.0 - _inc_gamma_continued_fraction(k, x, log_prefactor, max_iter))


def _inc_gamma_series(k: float, x: float, log_prefactor: float, max_iter: int) -> float:
    ap = k
    term = 1.0 / k
    total = term
    for _ in range(max_iter):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            return total * math.exp(log_prefactor)
    raise NonConvergenceError(f"incomplete gamma series did not converge (k={k}, x={x})")


def _inc_gamma_continued_fraction(k: float, x: float, log_prefactor: float, max_iter: int) -> float:
    tiny = sys.float_info.min / _EPS
    b = x + 1.0 - k
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, max_iter + 1):
        an = -i * (i - k)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        step = d * c
        h *= step
        if abs(step - 1.0) < _EPS:
            return math.exp(log_prefactor) * h
    raise NonConvergenceError(
        f"incomplete gamma continued fraction did not converge (k={k}, x={x})"
    )


# ----- Gaussian tail -----


@overload
def q_function(x: float) -> float: ...


@overload
def q_function(x: NDArray[np.float64]) -> NDArray[np.float64]: ...


def q_function(x: Union[float, NDArray[np.float64]]) -> Union[float, NDArray[np.float64]]:
    """Gaussian tail probability Q(x) = 1/2 erfc(x / sqrt 2)."""
    out = 0.5 * erfc(np.asarray(x, dtype=np.float64) / math.sqrt(2.0))
    if np.ndim(out) == 0:
        return float(out)
    return np.asarray(out, dtype=np.float64)


# ----- Adaptive quadrature -----


def _kronrod_panel(f: Integrand, lo: float, hi: float) -> tuple[float, float, float]:
    """Apply the 15-point rule on [lo, hi]; return (integral, error, integral of |f|)."""
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    x = center + half * _NODES
    y = np.broadcast_to(np.asarray(f(x), dtype=np.float64), x.shape)
    if not np.all(np.isfinite(y)):
        raise NonConvergenceError(f"integrand is not finite on [{lo:.6g}, {hi:.6g}]")
    res_k = float(_W_KRONROD @ y)
    res_g = float(_W_GAUSS @ y)
    res_abs = float(_W_KRONROD @ np.abs(y))
    res_asc = float(_W_KRONROD @ np.abs(y - 0.5 * res_k))
    hl = abs(half)
    err = abs((res_k - res_g) * half)
    res_asc *= hl
    res_abs *= hl
    if res_asc != 0.0 and err != 0.0:
        err = res_asc * min(1.0, (200.0 * err / res_asc) ** 1.5)
    if res_abs > sys.float_info.min / (50.0 * _EPS):
        err = max(50.0 * _EPS * res_abs, err)
    return res_k * half, err, res_abs


def integrate(
    f: Integrand,
    a: float,
    b: float,
    spec: QuadSpec | None = None,
    points: Iterable[float] = (),
) -> float:
    """Adaptive Gauss-Kronrod integral of a vectorised f over [a, b].

    b may be +inf; the tail beyond the last finite breakpoint is mapped onto
    (0, 1] with u = L + (1 - s) / s. Panels are bisected worst-first until the
    summed error estimate meets max(abs_tol, rel_tol * |I|).

    Args:
        f: Callable taking a float64 array and returning values of the same shape.
        a: Lower limit (finite).
        b: Upper limit (finite or +inf), b > a.
        spec: Tolerances; QuadSpec() when None.
        points: Interior breakpoints where f changes character.

    Raises:
        NonConvergenceError: if a panel needs more than spec.max_refinements
            bisections, the panel budget runs out, or f is not finite.
    """
    spec = spec or QuadSpec()
    if not (math.isfinite(a) and b > a):
        raise DomainError(f"integrate needs finite a < b, got [{a}, {b}]")

    edges = sorted({a, *(p for p in points if a < p < b)})
    if math.isfinite(b):
        edges.append(b)

    def tail(s: NDArray[np.float64]) -> NDArray[np.float64]:
        last = edges[-1]
        return np.asarray(f(last + (1.0 - s) / s), dtype=np.float64) / (s * s)

    funcs: tuple[Integrand, ...] = (f, tail)
    counter = itertools.count()
    heap: list[tuple[float, int, float, float, int, int, float, float]] = []

    def push(lo: float, hi: float, depth: int, which: int) -> None:
        value, err, res_abs = _kronrod_panel(funcs[which], lo, hi)
        METRICS.quadrature_intervals.inc()
        heapq.heappush(heap, (-err, next(counter), lo, hi, depth, which, value, res_abs))

    for lo, hi in zip(edges, edges[1:]):
        push(lo, hi, 0, 0)
    if not math.isfinite(b):
        push(0.0, 1.0, 0, 1)

    while True:
        total = math.fsum(item[6] for item in heap)
        err_sum = math.fsum(-item[0] for item in heap)
        abs_sum = math.fsum(item[7] for item in heap)
        target = max(spec.abs_tol, spec.rel_tol * abs(total))
        if err_sum <= target or err_sum <= 100.0 * _EPS * abs_sum:
            return total
        if len(heap) >= _MAX_PANELS:
            raise NonConvergenceError(
                f"quadrature exhausted {_MAX_PANELS} panels "
                f"(estimate {total:.6g}, error {err_sum:.3g})"
            )
        _, _, lo, hi, depth, which, _, _ = heapq.heappop(heap)
        if depth >= spec.max_refinements:
            raise NonConvergenceError(
                f"quadrature needs more than {spec.max_refinements} refinements near "
                f"[{lo:.6g}, {hi:.6g}] (estimate {total:.6g}, error {err_sum:.3g})"
            )
        mid = 0.5 * (lo + hi)
        push(lo, mid, depth + 1, which)
        push(mid, hi, depth + 1, which)


def _gamma_breakpoints(k: float, theta: float, points: Iterable[float]) -> list[float]:
    """Panel edges in u = gamma/theta: around the mode, at caller points, geometric below."""
    root = math.sqrt(k)
    upper = k + 10.0 * root + 30.0
    marks = {k, upper}
    for m in (2.0, 4.0, 8.0):
        marks.add(k + m * root)
        if k - m * root > 0:
            marks.add(k - m * root)
    for p in points:
        if p > 0 and math.isfinite(p):
            marks.add(p / theta)
    ordered = sorted(marks)
    ordered.insert(0, ordered[0] / 4.0**10)

    filled = [ordered[0]]
    for hi in ordered[1:]:
        lo = filled[-1]
        while hi / lo > 4.0:
            lo *= 4.0
            filled.append(lo)
        filled.append(hi)
    return filled


def expect_under_gamma(
    f: Integrand,
    k: float,
    theta: float,
    spec: QuadSpec | None = None,
    points: Iterable[float] = (),
) -> float:
    """Expectation of f(G) for G ~ Gamma(shape=k, scale=theta).

    Integrates in u = gamma/theta with the density weight evaluated in log
    space. For k < 1 the segment next to the origin is rewritten with t = u^k,
    which removes the u^(k-1) singularity.

    Args:
        f: Vectorised integrand on gamma >= 0.
        k: Shape, > 0.
        theta: Scale, > 0.
        spec: Tolerances; QuadSpec() when None.
        points: Values of gamma where f bends (e.g. 1 for log2(1 + gamma)).

    Raises:
        DomainError: if k or theta is not positive and finite.
        NonConvergenceError: propagated from integrate().
    """
    if not (k > 0 and math.isfinite(k)):
        raise DomainError(f"shape k must be > 0, got {k}")
    if not (theta > 0 and math.isfinite(theta)):
        raise DomainError(f"scale theta must be > 0, got {theta}")
    spec = spec or QuadSpec()

    lgk = ln_gamma(k)
    marks = _gamma_breakpoints(k, theta, points)
    u_min = marks[0]

    def weighted(u: NDArray[np.float64]) -> NDArray[np.float64]:
        w = np.exp((k - 1.0) * np.log(u) - u - lgk)
        return np.asarray(f(theta * u), dtype=np.float64) * w

    # abs_tol is a floor relative to a one-pass estimate of |E[f(G)]| when that is below 1
    size = math.fsum(_kronrod_panel(weighted, lo, hi)[2] for lo, hi in zip(marks, marks[1:]))
    if size < 1.0:
        spec = replace(spec, abs_tol=spec.abs_tol * size)

    body = integrate(weighted, u_min, math.inf, spec, marks[1:])

    if k < 1.0:
        inv_k = 1.0 / k

        def head_fn(t: NDArray[np.float64]) -> NDArray[np.float64]:
            u = t**inv_k
            return np.asarray(f(theta * u), dtype=np.float64) * np.exp(-u)

        head = math.exp(-ln_gamma(k + 1.0)) * integrate(head_fn, 0.0, u_min**k, spec)
    else:
        head = integrate(weighted, 0.0, u_min, spec)
    return head + body


# ----- Meijer-G instances -----


def _contour_value(
    log_f: Callable[[NDArray[np.complex128]], NDArray[np.complex128]],
    c: float,
    delta: float,
    theta: float,
    spec: QuadSpec,
) -> float:
    """(1/pi) * integral_0^inf Re F(c + i t) dt with F given through log F."""
    METRICS.meijer_evaluations.inc()
    log_scale = float(log_f(np.array([complex(c, 0.0)]))[0].real)

    def modulus(t: float) -> float:
        return math.exp(float(log_f(np.array([complex(c, t)]))[0].real) - log_scale)

    t_max = 4.0
    while modulus(t_max) * t_max > _CONTOUR_CUTOFF:
        t_max *= 1.5
        if t_max > _CONTOUR_T_MAX:
            raise NonConvergenceError(
                f"Mellin-Barnes integrand has not decayed by t={_CONTOUR_T_MAX} (c={c:.6g})"
            )

    marks = [delta * 4.0**j for j in range(12) if delta * 4.0**j < t_max]
    log_theta = abs(math.log(theta))
    if log_theta > 1.0:
        step = math.pi / log_theta
        marks.extend(step * j for j in range(1, int(t_max / step) + 1))

    def integrand(t: NDArray[np.float64]) -> NDArray[np.float64]:
        s = c + 1j * t
        return np.asarray(np.exp(log_f(s) - log_scale).real, dtype=np.float64)

    tight = replace(spec, rel_tol=max(spec.rel_tol * 1e-2, 1e-14), abs_tol=0.0)
    return math.exp(log_scale) * integrate(integrand, 0.0, t_max, tight, marks) / math.pi


def _check_shape_scale(k: float, theta: float) -> None:
    if not (k > 0 and math.isfinite(k)):
        raise DomainError(f"shape k must be > 0, got {k}")
    if not (theta > 0 and math.isfinite(theta)):
        raise DomainError(f"scale theta must be > 0, got {theta}")


def _pole_offset(theta: float, cap: float) -> float:
    log_theta = abs(math.log(theta))
    return cap if log_theta == 0.0 else min(cap, 1.0 / log_theta)


def meijer_g_ber(k: float, theta: float, spec: QuadSpec | None = None) -> float:
    """Average of Q(sqrt(2 gamma)) under Gamma(k, theta), through the Meijer-G form.

    F(s) = Gamma(s) Gamma(1/2 + s) Gamma(k - s) / Gamma(1 + s) * theta^(-s) / (2 sqrt(pi) Gamma(k))
    with the line between the left poles (s <= 0) and the right poles (s >= k).
    The line sits 1/|ln theta| from the pole family that dominates.
    """
    _check_shape_scale(k, theta)
    spec = spec or QuadSpec()
    log_theta = math.log(theta)
    norm = _LN_2SQRTPI + ln_gamma(k)

    def log_f(s: NDArray[np.complex128]) -> NDArray[np.complex128]:
        return (
            _ln_gamma_complex(s)
            + _ln_gamma_complex(s + 0.5)
            + _ln_gamma_complex(k - s)
            - _ln_gamma_complex(s + 1.0)
            - s * log_theta
            - norm
        )

    delta = _pole_offset(theta, 0.5 * k)
    c = delta if theta < 1.0 else k - delta
    return min(0.5, max(0.0, _contour_value(log_f, c, delta, theta, spec)))


def meijer_g_ac(k: float, theta: float, spec: QuadSpec | None = None) -> float:
    """Average of log2(1 + gamma) under Gamma(k, theta), through the Meijer-G form.

    F(s) = Gamma(1 + s) Gamma(k - s) Gamma(-s)^2 / Gamma(1 - s) * theta^(-s) / (Gamma(k) ln 2)
    with the line inside (-1, 0).
    """
    _check_shape_scale(k, theta)
    spec = spec or QuadSpec()
    log_theta = math.log(theta)
    norm = ln_gamma(k) + math.log(math.log(2.0))

    def log_f(s: NDArray[np.complex128]) -> NDArray[np.complex128]:
        return (
            _ln_gamma_complex(s + 1.0)
            + _ln_gamma_complex(k - s)
            + 2.0 * _ln_gamma_complex(-s)
            - _ln_gamma_complex(1.0 - s)
            - s * log_theta
            - norm
        )

    delta = _pole_offset(theta, 0.5)
    c = -1.0 + delta if theta < 1.0 else -delta
    return max(0.0, _contour_value(log_f, c, delta, theta, spec))

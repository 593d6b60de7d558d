"""Pruefer dynamics: block-to-block angle recursion and radius growth.

In the rotating frame a trajectory only sees one shear per perturbation
site plus a certified rotation per gap, so a depth-N run costs O(N) work
even though the underlying lattice has ~beta**N sites.  The angle theta_k
lives mod pi; the radius is carried as ln R_k**2 and never exponentiated.

The per-site radius kick is

    f(theta) = ln( q**4 cos**2 theta
                   + (sin theta + (1 - q**2) cot(varphi) cos theta)**2 )
             = ln( a + b cos 2 theta + c sin 2 theta ),

whose mean against the uniform angle distribution is ln(r q**2) with r the
ergodic growth rate; equidistribution of the angles is what the Weyl-sum
module certifies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .angles import AngleReducer, boundary_to_theta0, reduce_angle  # noqa: F401
from .model import DisorderRealization, SpectralConfig, coupling_at

__all__ = [
    "PrueferTrajectory",
    "ErgodicConstants",
    "f_eval",
    "f_coefficients",
    "pruefer_step",
    "run_trajectory",
    "ergodic_constants",
    "reduce_angle",
    "boundary_to_theta0",
]


def f_coefficients(q: float, varphi: float):
    """(a, b, c) with f = ln(a + b cos 2t + c sin 2t); a**2 = b**2 + c**2 + q**4."""
    _check_q_varphi(q, varphi)
    cot = math.cos(varphi) / math.sin(varphi)
    w = (1.0 - q * q) ** 2 * cot * cot
    q4 = q**4
    a = 0.5 * (w + 1.0 + q4)
    b = 0.5 * (w - 1.0 + q4)
    c = (1.0 - q * q) * cot
    return a, b, c


def f_eval(theta: float, q: float, varphi: float) -> float:
    """Radius kick at angle theta for coupling q (literal form)."""
    _check_q_varphi(q, varphi)
    if q == 1.0:
        # the argument is exactly sin**2 + cos**2; skip the roundoff
        return 0.0
    ct, st = math.cos(theta), math.sin(theta)
    cot = math.cos(varphi) / math.sin(varphi)
    arg = q**4 * ct * ct + (st + (1.0 - q * q) * cot * ct) ** 2
    if arg <= 0.0:
        raise ValueError(
            f"radius kick argument underflowed at theta={theta}, q={q}"
        )
    return math.log(arg)


def _check_q_varphi(q: float, varphi: float):
    if not (0 < q <= 1):
        raise ValueError(f"coupling must lie in (0, 1], got {q}")
    if math.sin(varphi) == 0.0:
        raise ValueError("varphi must not be a multiple of pi")


def _interior_angle(theta: float, q: float, varphi: float) -> float:
    # angle of the sheared direction P (cos theta, sin theta), mod pi
    ct, st = math.cos(theta), math.sin(theta)
    x = q * ct
    y = (st + (1.0 - q * q) * (math.cos(varphi) / math.sin(varphi)) * ct) / q
    return math.atan2(y, x) % math.pi


def pruefer_step(
    theta_prev: float,
    gap: int,
    varphi: float,
    q: float,
    precision_bits: Optional[int] = None,
    reducer: Optional[AngleReducer] = None,
) -> float:
    """One block: shear the angle at the site, then rotate through the gap.

    The branch of the new angle is resolved by taking the quadrant-correct
    angle of the sheared vector, not by inverting a tangent.
    """
    _check_q_varphi(q, varphi)
    if reducer is None:
        if precision_bits is None:
            precision_bits = int(gap).bit_length() + 128
        reducer = AngleReducer.from_varphi(varphi, precision_bits)
    reduced, _, _ = reducer.reduce(gap)
    return (_interior_angle(theta_prev, q, varphi) - reduced) % math.pi


@dataclass(frozen=True)
class PrueferTrajectory:
    """Angles theta_k (mod pi) and radii ln R_k**2 for blocks k = 1..N.

    certified_bits[k] is the accuracy certificate of the k-th reduced
    rotation angle; log_r2 telescopes as
    ln R_k**2 = -2 sum_{j<=k} ln q_j + sum_{j<=k} f_{q_j}(theta_j).
    """

    theta: np.ndarray
    log_r2: np.ndarray
    certified_bits: np.ndarray
    theta0: float
    varphi: float
    couplings: tuple
    realization: DisorderRealization

    def __len__(self) -> int:
        return len(self.theta)

    @property
    def min_certified_bits(self) -> int:
        return int(self.certified_bits.min())

    @property
    def mean_kick(self) -> float:
        """(1/N) sum_k f(theta_k); estimates ln(r q**2) for constant q."""
        n = len(self.theta)
        return (self.log_r2[-1] + 2.0 * sum(math.log(q) for q in self.couplings)) / n

    @property
    def growth_per_step(self) -> float:
        """(R_N**2)**(1/N); estimates r for constant coupling."""
        return math.exp(self.log_r2[-1] / len(self.theta))


def run_trajectory(
    config: SpectralConfig,
    realization: Optional[DisorderRealization] = None,
    theta0: Optional[float] = None,
    reducer: Optional[AngleReducer] = None,
) -> PrueferTrajectory:
    """Run the angle/radius recursion through all blocks of one realization."""
    if realization is None:
        realization = config.realization(0)
    if theta0 is None:
        theta0 = boundary_to_theta0(config.boundary_phase, config.energy.varphi)
    if reducer is None:
        reducer = AngleReducer.from_energy(
            config.energy, config.effective_precision_bits
        )
    varphi = reducer.varphi
    positions = realization.positions
    n = len(positions)
    qs = tuple(coupling_at(config.coupling, j) for j in range(1, n + 1))

    angles = [positions[0]] + [
        b - a for a, b in zip(positions[:-1], positions[1:])
    ]
    reductions = reducer.reduce_many(angles)

    theta = np.empty(n)
    log_r2 = np.empty(n)
    certs = np.empty(n, dtype=np.int64)

    th = (theta0 - reductions[0][0]) % math.pi
    certs[0] = reductions[0][2]
    theta[0] = th
    log_r2[0] = f_eval(th, qs[0], varphi) - 2.0 * math.log(qs[0])
    for k in range(1, n):
        reduced, _, cert = reductions[k]
        th = (_interior_angle(th, qs[k - 1], varphi) - reduced) % math.pi
        theta[k] = th
        certs[k] = cert
        log_r2[k] = log_r2[k - 1] + f_eval(th, qs[k], varphi) - 2.0 * math.log(qs[k])

    return PrueferTrajectory(
        theta=theta,
        log_r2=log_r2,
        certified_bits=certs,
        theta0=theta0,
        varphi=varphi,
        couplings=qs,
        realization=realization,
    )


# ---------------------------------------------------------------------------
# ergodic constants


@dataclass(frozen=True)
class ErgodicConstants:
    """Exact constants the angle averages converge to.

    growth_rate is r = 1 + (1-q**2)**2 / (4 q**2 sin**2 varphi);
    log_integral = (1/pi) integral of f = ln(r q**2); total_variation is
    the integral of |f'| over one period (enters the Koksma bound).
    """

    q: float
    varphi: float
    growth_rate: float
    log_integral: float
    total_variation: float
    coeff_a: float
    coeff_b: float
    coeff_c: float


def _adaptive_simpson(fun, lo, hi, tol):
    # classic bisecting Simpson with the 15x refinement criterion
    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = fun(lm), fun(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        if depth >= 48 or abs(left + right - whole) < 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return rec(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1) + rec(
            m, b, fm, frm, fb, right, 0.5 * tol, depth + 1
        )

    fa, fm, fb = fun(lo), fun(0.5 * (lo + hi)), fun(hi)
    whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb)
    return rec(lo, hi, fa, fm, fb, whole, tol, 0)


def _bisect_zero(fun, a, b, iters=200):
    fa = fun(a)
    for _ in range(iters):
        m = 0.5 * (a + b)
        fm = fun(m)
        if fm == 0.0 or (b - a) < 1e-15:
            return m
        if (fa < 0) == (fm < 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def ergodic_constants(q: float, varphi: float, tol: float = 1e-10) -> ErgodicConstants:
    """Growth rate, mean kick and total variation for coupling q.

    The total variation integral is split at the two zeros of f' (located
    by bisection on its numerator) and each monotone piece is integrated
    by adaptive Simpson to absolute tolerance `tol`.
    """
    a, b, c = f_coefficients(q, varphi)
    s2 = math.sin(varphi) ** 2
    growth = 1.0 + (1.0 - q * q) ** 2 / (4.0 * q * q * s2)
    log_integral = math.log(growth * q * q)

    if b == 0.0 and c == 0.0:  # free case: f vanishes identically
        return ErgodicConstants(q, varphi, growth, log_integral, 0.0, a, b, c)

    def dnum(t):  # numerator of f'
        return 2.0 * (c * math.cos(2.0 * t) - b * math.sin(2.0 * t))

    def abs_df(t):
        return abs(dnum(t) / (a + b * math.cos(2.0 * t) + c * math.sin(2.0 * t)))

    # f' has exactly two zeros per period; bracket them on a coarse grid
    grid = np.linspace(0.0, math.pi, 65)
    vals = [dnum(t) for t in grid]
    zeros = []
    for t0, t1, v0, v1 in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if v0 == 0.0:
            zeros.append(float(t0))
        elif (v0 < 0) != (v1 < 0):
            zeros.append(_bisect_zero(dnum, float(t0), float(t1)))
    zeros = sorted(set(zeros))

    cuts = [0.0] + [z for z in zeros if 1e-14 < z < math.pi - 1e-14] + [math.pi]
    tv = sum(
        _adaptive_simpson(abs_df, lo, hi, tol / max(1, len(cuts) - 1))
        for lo, hi in zip(cuts[:-1], cuts[1:])
    )
    return ErgodicConstants(q, varphi, growth, log_integral, tv, a, b, c)

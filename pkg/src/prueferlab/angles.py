"""Certified reduction of m * varphi modulo pi for big-integer m.

Positions grow like beta**N, so angles m * varphi are astronomically large
and must never be reduced in double precision.  The reducer stores
x = varphi / pi once at `precision_bits`, multiplies by the exact integer
m, and splits off the fractional part; the result then carries

    certified_bits = precision_bits - bit_length(m) - SLACK_BITS

guaranteed bits, which must stay >= 48.  gmpy2 contexts are thread-local,
so independent trajectories can reduce concurrently.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Optional

import gmpy2

from .model import EnergyPoint, PrecisionError

__all__ = ["AngleReducer", "reduce_angle", "MIN_CERTIFIED_BITS", "SLACK_BITS"]

MIN_CERTIFIED_BITS = 48
SLACK_BITS = 8


class AngleReducer:
    """Reduces m * varphi mod pi with a certificate, for integer m >= 0.

    The high-precision ratio x = varphi/pi is fixed at construction:
      - from_lambda: x = acos(lam/2)/pi with the double lam taken exactly;
      - from_pi_fraction: x = num/den exactly (resonances stay exact at
        any depth, which the rational-control experiments rely on);
      - from_varphi: x = varphi/pi with the double varphi taken exactly.
    from_energy picks the exact-fraction route for certified rationals.
    """

    def __init__(self, x_over_pi, varphi: float, precision_bits: int):
        if precision_bits < MIN_CERTIFIED_BITS + SLACK_BITS:
            raise PrecisionError(
                f"precision_bits={precision_bits} cannot certify {MIN_CERTIFIED_BITS} bits"
            )
        self.precision_bits = int(precision_bits)
        self.varphi = float(varphi)
        with gmpy2.context(precision=self.precision_bits):
            self._x = gmpy2.mpfr(x_over_pi)
            self._pi = gmpy2.const_pi()

    # -- constructors --------------------------------------------------

    @classmethod
    def from_lambda(cls, lam: float, precision_bits: int) -> "AngleReducer":
        with gmpy2.context(precision=precision_bits):
            varphi_mp = gmpy2.acos(gmpy2.mpfr(lam) / 2)
            x = varphi_mp / gmpy2.const_pi()
        return cls(x, float(varphi_mp), precision_bits)

    @classmethod
    def from_varphi(cls, varphi: float, precision_bits: int) -> "AngleReducer":
        with gmpy2.context(precision=precision_bits):
            x = gmpy2.mpfr(varphi) / gmpy2.const_pi()
        return cls(x, varphi, precision_bits)

    @classmethod
    def from_pi_fraction(cls, num: int, den: int, precision_bits: int) -> "AngleReducer":
        frac = Fraction(num, den)
        with gmpy2.context(precision=precision_bits):
            x = gmpy2.mpfr(gmpy2.mpq(frac.numerator, frac.denominator))
            varphi = float(x * gmpy2.const_pi())
        return cls(x, varphi, precision_bits)

    @classmethod
    def from_energy(cls, energy: EnergyPoint, precision_bits: int) -> "AngleReducer":
        if energy.rationality.is_rational:
            f = energy.rationality.fraction
            return cls.from_pi_fraction(f.numerator, f.denominator, precision_bits)
        return cls.from_lambda(energy.lam, precision_bits)

    # -- reduction -----------------------------------------------------

    def certified_bits(self, m: int) -> int:
        return self.precision_bits - int(m).bit_length() - SLACK_BITS

    def reduce(self, m: int):
        """Return (reduced, parity, certified_bits) with
        m * varphi = reduced + (2k + parity) * pi and reduced in [0, pi)."""
        return self.reduce_many([m])[0]

    def reduce_many(self, ms) -> list:
        """Batch reduction under a single precision context."""
        out = []
        with gmpy2.context(precision=self.precision_bits):
            for m in ms:
                m = int(m)
                if m < 0:
                    raise ValueError(f"reduction needs m >= 0, got {m}")
                certified = self.certified_bits(m)
                if certified < MIN_CERTIFIED_BITS:
                    raise PrecisionError(
                        f"only {certified} certified bits for bit_length(m)="
                        f"{m.bit_length()} at precision {self.precision_bits}; "
                        f"need {MIN_CERTIFIED_BITS}"
                    )
                y = m * self._x
                fl = gmpy2.floor(y)
                reduced = float((y - fl) * self._pi)
                out.append((reduced, int(fl) & 1, certified))
        return out


def reduce_angle(m: int, varphi: float, precision_bits: Optional[int] = None):
    """One-shot certified reduction of m * varphi mod pi.

    precision_bits defaults to bit_length(m) + 128.  Returns
    (reduced, parity, certified_bits).
    """
    if precision_bits is None:
        precision_bits = int(m).bit_length() + 128
    return AngleReducer.from_varphi(varphi, precision_bits).reduce(m)


def boundary_to_theta0(boundary_phase: float, varphi: float) -> float:
    """Initial conjugated-frame angle for the boundary data
    (u_0, u_{-1}) = (cos phi_bc, sin phi_bc).

    The conjugated initial vector is U (u_0, u_{-1}); matching the radius
    recursion to the full transfer product costs one extra clockwise
    rotation by varphi (the product ends on a half-open block).
    """
    u0, um1 = math.cos(boundary_phase), math.sin(boundary_phase)
    # U = [[0, sin varphi], [1, -cos varphi]]
    w = (math.sin(varphi) * um1, u0 - math.cos(varphi) * um1)
    return (math.atan2(w[1], w[0]) - varphi) % math.pi

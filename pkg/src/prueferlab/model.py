"""Model layer: sparse perturbation positions, disorder, couplings, energies.

The operator lives on the half line with off-diagonal entries equal to 1
except at a sparse random set of sites a_j + omega_j, where the entry is
the coupling q_j in (0, 1].  Everything here is exact integer arithmetic
(positions can exceed 2**2000) plus a counter-based RNG so that a
realization is a pure function of (seed, sample_index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

import gmpy2
import numpy as np

__all__ = [
    "ConfigError",
    "PrecisionError",
    "AdmissibilityError",
    "ExponentialGaps",
    "StretchedGaps",
    "LinearEnvelope",
    "PowerEnvelope",
    "ConstantCoupling",
    "DecayingCoupling",
    "EnergyPoint",
    "Rationality",
    "DisorderRealization",
    "SpectralConfig",
    "generate_positions",
    "sample_disorder",
    "coupling_at",
    "verify_product_bracketing",
]

RATIONALITY_DENOMINATOR_BOUND = 10**6
RATIONALITY_TOL = 1e-15
MAX_RESAMPLE = 100
PRECISION_MARGIN_BITS = 96


class ConfigError(ValueError):
    """Invalid model parameters or malformed experiment input."""


class PrecisionError(RuntimeError):
    """A certified-precision requirement cannot be met."""


class AdmissibilityError(RuntimeError):
    """Disorder resampling could not produce admissible gaps."""


# ---------------------------------------------------------------------------
# sparsity laws


@dataclass(frozen=True)
class ExponentialGaps:
    """Positions a_1 = beta - 1, a_j = a_{j-1} + beta**j (exact integers)."""

    beta: int

    def __post_init__(self):
        if not isinstance(self.beta, int) or isinstance(self.beta, bool):
            raise ConfigError(f"beta must be an integer >= 2, got {self.beta!r}")
        if self.beta < 2:
            raise ConfigError(f"beta must be >= 2, got {self.beta}")

    def gap(self, j: int) -> int:
        # first gap is a_1 - 0 = beta - 1, later ones are beta**j
        return self.beta - 1 if j == 1 else self.beta**j

    def positions(self, n: int) -> tuple:
        out, a = [], 0
        for j in range(1, n + 1):
            a += self.gap(j)
            out.append(a)
        return tuple(out)


def _floor_exp_exact(exponent: float) -> int:
    """Exact integer part of exp(exponent) for exponent >= 0.

    Evaluated in extended precision with an escalation loop: the floor is
    accepted only once two precisions 64 bits apart agree, so a value
    sitting on an integer boundary cannot round inconsistently.
    """
    if exponent < 0:
        raise ConfigError("gap exponent must be nonnegative")
    if exponent > 5e6:  # ~7e6 bits; beyond the precision policy
        raise PrecisionError(
            f"stretched gap exponent {exponent:.3g} exceeds the precision policy"
        )
    bits = max(64, int(exponent / math.log(2)) + 64)
    prev = None
    for _ in range(6):
        with gmpy2.context(precision=bits):
            val = int(gmpy2.floor(gmpy2.exp(gmpy2.mpfr(exponent))))
        if val == prev:
            return val
        prev, bits = val, bits + 64
    raise PrecisionError(f"floor(exp({exponent})) did not stabilize")


@dataclass(frozen=True)
class StretchedGaps:
    """Gaps floor(exp(c * j**gamma)) accumulated from a_0 = 0."""

    c: float
    gamma: float

    def __post_init__(self):
        if not (self.c > 0) or not (self.gamma > 0):
            raise ConfigError(
                f"stretched law needs c > 0 and gamma > 0, got c={self.c}, gamma={self.gamma}"
            )
        # first gap floor(e^c) must already satisfy the admissibility floor of 2
        if _floor_exp_exact(self.c) < 2:
            raise ConfigError(
                f"stretched law with c={self.c} has first gap < 2; need c >= ln 2"
            )

    def gap(self, j: int) -> int:
        return _floor_exp_exact(self.c * float(j) ** self.gamma)

    def positions(self, n: int) -> tuple:
        out, a = [], 0
        for j in range(1, n + 1):
            a += self.gap(j)
            out.append(a)
        return tuple(out)


SparsityLaw = Union[ExponentialGaps, StretchedGaps]


def generate_positions(law: SparsityLaw, n: int) -> tuple:
    """Unperturbed positions a_1 < ... < a_n as exact Python integers."""
    if n < 1:
        raise ConfigError(f"need at least one position, got n={n}")
    return law.positions(n)


# ---------------------------------------------------------------------------
# disorder laws


@dataclass(frozen=True)
class LinearEnvelope:
    """omega_j uniform on the integers {-j, ..., j}."""

    def half_width(self, j: int) -> int:
        return j


@dataclass(frozen=True)
class PowerEnvelope:
    """omega_j uniform on the integers [-j**epsilon, j**epsilon]."""

    epsilon: float

    def __post_init__(self):
        if not (0 < self.epsilon < 1):
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon}")

    def half_width(self, j: int) -> int:
        return int(math.floor(float(j) ** self.epsilon))


DisorderLaw = Union[LinearEnvelope, PowerEnvelope]


@dataclass(frozen=True)
class DisorderRealization:
    """One admissible draw of perturbation sites.

    positions are a_j + omega_j, strictly increasing, with every gap
    between consecutive sites (j >= 2) at least 2.  `rejections` counts
    how many omega draws the admissibility filter discarded.
    """

    positions: tuple
    offsets: tuple
    seed: int
    sample_index: int
    rejections: int = 0

    @property
    def gaps(self) -> tuple:
        return tuple(
            b - a for a, b in zip(self.positions[:-1], self.positions[1:])
        )

    def __post_init__(self):
        prev = -1
        for j, pos in enumerate(self.positions):
            if pos < 0:
                raise ConfigError(f"position {pos} is negative")
            gap = pos - prev
            if j >= 1 and gap < 2:
                raise ConfigError(f"gap {gap} below admissibility floor at j={j + 1}")
            prev = pos


def _draw_offset(seed: int, sample_index: int, j: int, attempt: int, s: int) -> int:
    # counter-based: the draw is a pure function of (seed, sample_index, j, attempt)
    bg = np.random.Philox(
        key=np.array([seed, sample_index], dtype=np.uint64),
        counter=np.array([j, attempt, 0, 0], dtype=np.uint64),
    )
    return int(np.random.Generator(bg).integers(-s, s + 1))


def sample_disorder(
    law: DisorderLaw,
    base_positions,
    seed: int,
    sample_index: int = 0,
    max_resample: int = MAX_RESAMPLE,
) -> DisorderRealization:
    """Draw offsets omega_j and enforce admissibility (gaps >= 2).

    Offsets are drawn in increasing j; when a gap to the previous accepted
    site falls below 2 only the offending omega_j is redrawn, at most
    `max_resample` times, after which AdmissibilityError is raised.  The
    first site only needs to be >= 0.
    """
    if seed < 0 or sample_index < 0:
        raise ConfigError("seed and sample_index must be nonnegative")
    positions, offsets = [], []
    rejections = 0
    prev = None
    for idx, a in enumerate(base_positions):
        j = idx + 1
        s = law.half_width(j)
        if prev is not None and (a + s) - prev < 2:
            raise AdmissibilityError(
                f"gap at j={j} cannot reach 2 for any offset (support half-width {s})"
            )
        for attempt in range(max_resample + 1):
            omega = _draw_offset(seed, sample_index, j, attempt, s)
            pos = a + omega
            if prev is None:
                ok = pos >= 0
            else:
                ok = pos - prev >= 2
            if ok:
                break
            rejections += 1
        else:
            raise AdmissibilityError(
                f"admissibility not reached at j={j} after {max_resample} resamples"
            )
        positions.append(pos)
        offsets.append(omega)
        prev = pos
    return DisorderRealization(
        positions=tuple(positions),
        offsets=tuple(offsets),
        seed=seed,
        sample_index=sample_index,
        rejections=rejections,
    )


# ---------------------------------------------------------------------------
# coupling laws


@dataclass(frozen=True)
class ConstantCoupling:
    """q_j = p at every perturbation site."""

    p: float

    def __post_init__(self):
        if not (0 < self.p <= 1):
            raise ConfigError(f"coupling p must lie in (0, 1], got {self.p}")

    def value(self, j: int) -> float:
        return self.p


@dataclass(frozen=True)
class DecayingCoupling:
    """q_j = exp(-(c*gamma*j**(gamma-1) - c1*delta*j**(delta-1)) / 2).

    The running product of q_j**-2 then tracks exp(c n**gamma - c1 n**delta)
    up to Riemann-sum corrections; see verify_product_bracketing.  delta = 1
    is allowed (split-band regime); otherwise gamma > delta > max(1, gamma-1).
    """

    c: float
    gamma: float
    c1: float
    delta: float

    def __post_init__(self):
        if not (self.gamma > 1):
            raise ConfigError(f"decaying coupling needs gamma > 1, got {self.gamma}")
        if not (self.c > 0 and self.c1 > 0):
            raise ConfigError("decaying coupling needs c > 0 and c1 > 0")
        if not (self.gamma > self.delta >= max(1.0, self.gamma - 1.0)):
            raise ConfigError(
                f"need gamma > delta >= max(1, gamma-1), got gamma={self.gamma}, delta={self.delta}"
            )
        # q_1 <= 1 forces the whole sequence into (0, 1] since gamma > delta
        if self.c * self.gamma < self.c1 * self.delta:
            raise ConfigError(
                f"need c*gamma >= c1*delta so q_j <= 1, got {self.c * self.gamma} < {self.c1 * self.delta}"
            )

    def value(self, j: int) -> float:
        jj = float(j)
        expo = self.c * self.gamma * jj ** (self.gamma - 1.0)
        expo -= self.c1 * self.delta * jj ** (self.delta - 1.0)
        return math.exp(-0.5 * expo)


CouplingLaw = Union[ConstantCoupling, DecayingCoupling]


def coupling_at(law: CouplingLaw, j: int) -> float:
    """Coupling q_j at the j-th perturbation site (1-based)."""
    if j < 1:
        raise ConfigError(f"site index must be >= 1, got {j}")
    q = law.value(j)
    if not (0 < q <= 1):
        raise ConfigError(f"coupling law produced q_{j}={q} outside (0, 1]")
    return q


def verify_product_bracketing(law: DecayingCoupling, k_test: int = 50):
    """Measure the bracketing constants of prod_{j<=n} q_j**-2.

    Writes ln prod = c*n**gamma - c_eff(n)*n**delta and returns
    (c_eff_min, c_eff_max, ok) where ok means 0 < c_eff(n) <= c1 for all
    1 <= n <= k_test, i.e. the product is squeezed between
    exp(c n^gamma - c1 n^delta) and exp(c n^gamma - c_eff_min n^delta).
    """
    log_prod = 0.0
    c_effs = []
    for n in range(1, k_test + 1):
        log_prod += -2.0 * math.log(coupling_at(law, n))
        c_effs.append((law.c * float(n) ** law.gamma - log_prod) / float(n) ** law.delta)
    c_min, c_max = min(c_effs), max(c_effs)
    ok = c_min > 0 and c_max <= law.c1 + 1e-12
    return c_min, c_max, ok


# ---------------------------------------------------------------------------
# energies


@dataclass(frozen=True)
class Rationality:
    """Certification of varphi/pi: rational p/q, or no rational with
    denominator <= denominator_bound within RATIONALITY_TOL."""

    kind: str  # "rational" | "irrational-certified" | "unknown"
    fraction: Optional[Fraction] = None
    denominator_bound: int = RATIONALITY_DENOMINATOR_BOUND

    @property
    def is_rational(self) -> bool:
        return self.kind == "rational"


def detect_pi_fraction(
    x: float,
    max_denominator: int = RATIONALITY_DENOMINATOR_BOUND,
    tol: float = RATIONALITY_TOL,
) -> Rationality:
    """Continued-fraction certification of x as a fraction of pi.

    limit_denominator walks the convergents of the continued fraction of x,
    which is exactly the best-approximation search needed here.
    """
    frac = Fraction(x).limit_denominator(max_denominator)
    if abs(x - float(frac)) < tol:
        return Rationality("rational", frac, max_denominator)
    return Rationality("irrational-certified", None, max_denominator)


@dataclass(frozen=True)
class EnergyPoint:
    """Band-interior energy lam = 2 cos(varphi), varphi in (0, pi)."""

    lam: float
    varphi: float
    rationality: Rationality

    def __post_init__(self):
        if not (-2.0 < self.lam < 2.0):
            raise ConfigError(f"energy must lie inside the band (-2, 2), got {self.lam}")

    @classmethod
    def from_lambda(cls, lam: float) -> "EnergyPoint":
        if not (-2.0 < lam < 2.0):
            raise ConfigError(f"energy must lie inside the band (-2, 2), got {lam}")
        varphi = math.acos(lam / 2.0)
        return cls(lam=lam, varphi=varphi, rationality=detect_pi_fraction(varphi / math.pi))

    @classmethod
    def from_varphi(cls, varphi: float) -> "EnergyPoint":
        if not (0.0 < varphi < math.pi):
            raise ConfigError(f"varphi must lie in (0, pi), got {varphi}")
        return cls(
            lam=2.0 * math.cos(varphi),
            varphi=varphi,
            rationality=detect_pi_fraction(varphi / math.pi),
        )

    @classmethod
    def from_pi_fraction(cls, num: int, den: int) -> "EnergyPoint":
        """Exact rational multiple varphi = (num/den) * pi."""
        frac = Fraction(num, den)
        if not (0 < frac < 1):
            raise ConfigError(f"varphi/pi must lie in (0, 1), got {frac}")
        varphi = float(frac) * math.pi
        return cls(
            lam=2.0 * math.cos(varphi),
            varphi=varphi,
            rationality=Rationality("rational", frac),
        )


# ---------------------------------------------------------------------------
# full configuration


@dataclass(frozen=True)
class SpectralConfig:
    """Everything needed to run one ensemble: laws, energy, depth, seed.

    precision_bits=None lets the policy pick bit_length(a_N) + 128, which
    always satisfies the floor bit_length(a_N^omega) + 96.  An explicit
    value is taken as-is; the angle reducer aborts later if it certifies
    fewer than 48 bits.
    """

    sparsity: SparsityLaw
    disorder: DisorderLaw
    coupling: CouplingLaw
    energy: EnergyPoint
    depth: int
    seed: int
    boundary_phase: float = 0.0
    precision_bits: Optional[int] = None
    base_positions: tuple = field(init=False, repr=False, compare=False, default=())

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed}")
        if not (0.0 <= self.boundary_phase < math.pi):
            raise ConfigError(
                f"boundary_phase must lie in [0, pi), got {self.boundary_phase}"
            )
        object.__setattr__(
            self, "base_positions", generate_positions(self.sparsity, self.depth)
        )
        if self.precision_bits is not None and self.precision_bits < 53:
            raise ConfigError(
                f"precision_bits must be at least 53, got {self.precision_bits}"
            )

    @property
    def policy_precision_bits(self) -> int:
        """Floor demanded by the policy: bit_length(a_N) + 96 (+32 slack)."""
        return self.base_positions[-1].bit_length() + PRECISION_MARGIN_BITS + 32

    @property
    def effective_precision_bits(self) -> int:
        return (
            self.precision_bits
            if self.precision_bits is not None
            else self.policy_precision_bits
        )

    def realization(self, sample_index: int = 0) -> DisorderRealization:
        return sample_disorder(self.disorder, self.base_positions, self.seed, sample_index)

    def couplings(self) -> tuple:
        return tuple(coupling_at(self.coupling, j) for j in range(1, self.depth + 1))

"""Uniform-distribution diagnostics for angle sequences mod pi.

Everything here treats a trajectory of angles theta_n in [0, pi) through
its normalized points u_n = theta_n / pi on [0, 1): Weyl sums, the
ensemble-averaged second-moment series (whose summability drives the
almost-sure equidistribution argument), exact star discrepancy, and the
Koksma contraction factor C_N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import ConfigError, SpectralConfig
from .pruefer import run_trajectory

__all__ = [
    "RESONANCE_TOL",
    "WeylReport",
    "SeriesDiagnostic",
    "DiscrepancyReport",
    "weyl_sum",
    "dirichlet_bound",
    "star_discrepancy",
    "koksma_factor",
    "del_series_diagnostic",
]

# |sin(h varphi)| below this counts as an exact resonance of the kernel
RESONANCE_TOL = 1e-9

DEFAULT_H_LIST = (1, 2, 3, 5, 8)


def weyl_sum(theta_seq: Sequence[float], h: int) -> complex:
    """S_h(N) = (1/N) sum_n exp(2 i h theta_n); |S_h| <= 1."""
    if h == 0:
        raise ValueError("harmonic index h must be nonzero")
    theta = np.asarray(theta_seq, dtype=float)
    if theta.size == 0:
        raise ValueError("empty angle sequence")
    return complex(np.mean(np.exp(2j * h * theta)))


def dirichlet_bound(n: int, h: int, varphi: float):
    """Kernel decay |sin((2n+1) h varphi)| / ((2n+1) |sin(h varphi)|).

    Returns (value, cap) with cap = 1/((2n+1)|sin(h varphi)|).  At a
    resonance (h varphi a multiple of pi) the kernel peaks and the limit
    value is 1 while the cap is infinite.
    """
    if n < 1:
        raise ValueError(f"window size must be >= 1, got {n}")
    if h == 0:
        raise ValueError("harmonic index h must be nonzero")
    denom = abs(math.sin(h * varphi))
    if denom < RESONANCE_TOL:
        return 1.0, math.inf
    width = 2 * n + 1
    return abs(math.sin(width * h * varphi)) / (width * denom), 1.0 / (width * denom)


@dataclass(frozen=True)
class DiscrepancyReport:
    """Exact star discrepancy of N points and the induced Koksma factor."""

    n: int
    d_star: float
    koksma_c_n: float

    def __post_init__(self):
        if not (1.0 / (2 * self.n) - 1e-15 <= self.d_star <= 1.0 + 1e-15):
            raise ValueError(
                f"star discrepancy {self.d_star} outside [1/(2N), 1] for N={self.n}"
            )


def star_discrepancy(
    theta_seq: Sequence[float], total_variation: float = 0.0
) -> DiscrepancyReport:
    """Exact D_N* of {theta_n / pi} via the sorted two-sided formula.

    With a total variation V the report carries C_N = exp(-N D* V / pi);
    V = 0 (the free case) gives C_N = 1.
    """
    theta = np.asarray(theta_seq, dtype=float)
    if theta.size == 0:
        raise ValueError("empty angle sequence")
    u = np.sort(theta / math.pi)
    n = u.size
    i = np.arange(1, n + 1)
    d_star = float(np.max(np.maximum(i / n - u, u - (i - 1) / n)))
    c_n, _ = koksma_factor(d_star, total_variation, n)
    return DiscrepancyReport(n=n, d_star=d_star, koksma_c_n=c_n)


def koksma_factor(d_star: float, total_variation: float, n: int):
    """C_N = exp(-N D* V / pi) and its per-step root exp(-D* V / pi)."""
    if d_star < 0 or total_variation < 0 or n < 1:
        raise ValueError("koksma factor needs nonnegative inputs and N >= 1")
    root = math.exp(-d_star * total_variation / math.pi)
    return math.exp(-n * d_star * total_variation / math.pi), root


@dataclass(frozen=True)
class WeylReport:
    """Second moment of S_h(N) over a disorder ensemble at one (h, N)."""

    h: int
    n: int
    s_h_abs2: np.ndarray
    i_h: float
    standard_error: float
    bound: float


@dataclass(frozen=True)
class SeriesDiagnostic:
    """Trend evidence for one harmonic h across a ladder of lengths N.

    partial_sum accumulates I_h(N)/N over the ladder; the verdict is
    Convergent-trend when every I_h(N) sits under the analytic bound
    (1/N)(1 + 1/|sin h varphi|) within 3 standard errors.  At a kernel
    resonance the bound is infinite, so the verdict falls back to the
    growth of N * I_h(N): bounded means convergent, growing means not.
    """

    h: int
    reports: tuple
    partial_sum: float
    verdict: str

    @property
    def resonant(self) -> bool:
        return any(math.isinf(r.bound) for r in self.reports)


def _verdict(reports) -> str:
    if any(math.isinf(r.bound) for r in reports):
        scaled = [r.i_h * r.n for r in reports]
        growing = scaled[-1] > 2.0 * scaled[0]
        return "Divergent-trend" if growing else "Convergent-trend"
    ok = all(r.i_h <= r.bound + 3.0 * r.standard_error for r in reports)
    return "Convergent-trend" if ok else "Divergent-trend"


def del_series_diagnostic(
    config: SpectralConfig,
    ensemble_size: int = 64,
    h_list: Iterable[int] = DEFAULT_H_LIST,
    n_list: Optional[Iterable[int]] = None,
) -> dict:
    """Monte Carlo I_h(N) = E|S_h(N)|^2 over disorder, per h and N.

    Returns {h: SeriesDiagnostic}.  The trajectory prefixes reuse one run
    per sample, so the ladder costs one depth-max(N) trajectory each.
    """
    if ensemble_size < 1:
        raise ConfigError("empty ensemble")
    if ensemble_size < 16:
        raise ConfigError(
            f"ensemble_size must be >= 16 for stable error bars, got {ensemble_size}"
        )
    if config.energy.rationality.kind == "unknown":
        raise ConfigError(
            "energy needs a rationality flag (rational or irrational-certified)"
        )
    h_list = tuple(h_list)
    if any(h == 0 for h in h_list):
        raise ConfigError("harmonic index h must be nonzero")
    if n_list is None:
        n_list = default_length_ladder(config.depth)
    n_list = tuple(sorted(n_list))
    if not n_list:
        raise ConfigError("empty N ladder")
    if n_list[-1] > config.depth:
        raise ConfigError(
            f"N ladder reaches {n_list[-1]} but trajectories have {config.depth} blocks"
        )

    varphi = config.energy.varphi
    # s2[ih, iN, sample] = |S_h(N)|^2
    s2 = np.empty((len(h_list), len(n_list), ensemble_size))
    for s in range(ensemble_size):
        traj = run_trajectory(config, realization=config.realization(s))
        for ih, h in enumerate(h_list):
            csum = np.cumsum(np.exp(2j * h * traj.theta))
            for iN, n in enumerate(n_list):
                s2[ih, iN, s] = abs(csum[n - 1] / n) ** 2

    out = {}
    for ih, h in enumerate(h_list):
        denom = abs(math.sin(h * varphi))
        reports = []
        for iN, n in enumerate(n_list):
            vals = s2[ih, iN]
            se = float(vals.std(ddof=1) / math.sqrt(ensemble_size)) if ensemble_size > 1 else 0.0
            bound = math.inf if denom < RESONANCE_TOL else (1.0 + 1.0 / denom) / n
            reports.append(
                WeylReport(
                    h=h,
                    n=n,
                    s_h_abs2=vals.copy(),
                    i_h=float(vals.mean()),
                    standard_error=se,
                    bound=bound,
                )
            )
        reports = tuple(reports)
        out[h] = SeriesDiagnostic(
            h=h,
            reports=reports,
            partial_sum=float(sum(r.i_h / r.n for r in reports)),
            verdict=_verdict(reports),
        )
    return out


def default_length_ladder(depth: int):
    """Powers of two from 128 (or depth/16) up to depth."""
    if depth < 2:
        return (depth,)
    start = max(2, min(128, depth // 16))
    ladder = []
    n = start
    while n < depth:
        ladder.append(n)
        n *= 2
    ladder.append(depth)
    return tuple(ladder)

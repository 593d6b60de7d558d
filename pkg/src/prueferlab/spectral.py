"""Spectral-phase classification and the series diagnostics behind it.

The closed-form side: at energy lam = 2 cos(varphi) with intensity
v = (1 - p**2)/p and density exponent beta, the growth rate per block is
r = 1 + v**2/(4 - lam**2), the phase boundary is beta = r, and the
singular continuous region carries local Hausdorff dimension
1 - ln r / ln beta.

The measured side: convergence diagnostics for the eigenfunction series
(geometric ratio tests on blockwise norm data), plateau sums over free
stretches, fitted continuity/singularity exponents, and the regime table
for stretched gaps with constant or decaying coupling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import (
    ConstantCoupling,
    CouplingLaw,
    DecayingCoupling,
    ExponentialGaps,
    Rationality,
    SparsityLaw,
    StretchedGaps,
    verify_product_bracketing,
)

__all__ = [
    "PhaseVerdict",
    "SeriesDiagnostic",
    "LastSimonReport",
    "ScalingReport",
    "RegimeVerdict",
    "intensity",
    "classify",
    "hausdorff_dimension",
    "critical_energy",
    "agreement_grid",
    "lemma_l2_diagnostic",
    "last_simon_diagnostics",
    "scaling_exponents",
    "regime_classify",
]

# verdicts about zero-measure energy sets cannot be decided numerically
ZERO_MEASURE_CAVEAT = "up to zero-measure energy exclusions"

RATIO_DEAD_BAND = 1e-3
MIN_SERIES_TERMS = 8


def intensity(p: Optional[float] = None, v: Optional[float] = None) -> float:
    """Bridge between coupling families: v = (1 - p**2)/p, or v directly."""
    if (p is None) == (v is None):
        raise ValueError("pass exactly one of p (coupling) or v (intensity)")
    if p is not None:
        if not (0.0 < p < 1.0):
            raise ValueError(f"coupling p must lie in (0, 1), got {p}")
        return (1.0 - p * p) / p
    if not (v > 0.0):
        raise ValueError(f"intensity v must be positive, got {v}")
    return float(v)


def _check_interior(lam: float):
    if not (-2.0 < lam < 2.0):
        raise ValueError(f"energy must lie inside the band (-2, 2), got {lam}")


def _check_beta(beta: float):
    if not (beta >= 2.0):
        raise ValueError(f"density exponent beta must be >= 2, got {beta}")


@dataclass(frozen=True)
class PhaseVerdict:
    """Phase at one parameter point plus the numbers that decided it.

    phase is "SC", "PP" or "Excluded"; dimension is the local Hausdorff
    dimension on the SC side (0.0 at an exact boundary tie, None for PP
    and other exclusions); reason is set only for Excluded verdicts
    ("RationalEnergy" | "BandEdge" | "BoundaryTie").
    """

    phase: str
    dimension: Optional[float]
    reason: Optional[str]
    diagnostics: dict = field(default_factory=dict)


def classify(
    lam: float,
    beta: float,
    p: Optional[float] = None,
    v: Optional[float] = None,
    rationality: Optional[Rationality] = None,
) -> PhaseVerdict:
    """Phase verdict from the closed-form inequality, SC iff beta >= r.

    The verdict is decided by the density-vs-growth value
    i1 = (beta - 1)(4 - lam**2)/v**2 (SC iff i1 >= 1, with an exact tie
    reported as Excluded/BoundaryTie since the dimension degenerates to 0
    there).  The equivalent beta >= r form is evaluated independently and
    recorded in the diagnostics as a cross-check.  Rational-multiple
    energies are excluded only when the caller passes rationality
    evidence; a bare float never triggers the exclusion.
    """
    _check_interior(lam)
    _check_beta(beta)
    vv = intensity(p, v)

    if rationality is not None and rationality.is_rational:
        return PhaseVerdict(
            phase="Excluded",
            dimension=None,
            reason="RationalEnergy",
            diagnostics={"caveat": ZERO_MEASURE_CAVEAT},
        )

    band = 4.0 - lam * lam
    i1 = (beta - 1.0) * band / (vv * vv)
    r = 1.0 + vv * vv / band
    diagnostics = {
        "i1_value": i1,
        "growth_rate": r,
        "beta_over_r": beta / r,
        "intensity": vv,
        "forms_agree": (i1 >= 1.0) == (beta >= r),
        "caveat": ZERO_MEASURE_CAVEAT,
    }
    if i1 == 1.0:
        return PhaseVerdict("Excluded", 0.0, "BoundaryTie", diagnostics)
    if i1 > 1.0:
        dim = max(0.0, 1.0 - math.log(r) / math.log(beta))
        return PhaseVerdict("SC", dim, None, diagnostics)
    return PhaseVerdict("PP", None, None, diagnostics)


def hausdorff_dimension(lam: float, v: float, beta: float) -> float:
    """Local dimension 1 - ln(1 + v**2/(4 - lam**2)) / ln(beta) on SC."""
    _check_interior(lam)
    _check_beta(beta)
    if v < 0.0:
        raise ValueError(f"intensity v must be nonnegative, got {v}")
    if v * v >= 4.0 * (beta - 1.0):
        raise ValueError(
            f"v**2 = {v * v} >= 4(beta-1) = {4 * (beta - 1)}: no interior SC window"
        )
    dim = 1.0 - math.log1p(v * v / (4.0 - lam * lam)) / math.log(beta)
    if dim < -1e-12:
        raise ValueError(
            f"(lam={lam}, v={v}, beta={beta}) lies in the PP region; no dimension"
        )
    return max(0.0, dim)


def critical_energy(
    beta: float, p: Optional[float] = None, v: Optional[float] = None
):
    """Band-interior phase boundary +-sqrt(4 - v**2/(beta-1)).

    Returns (lam_minus, lam_plus); SC holds strictly between them, PP
    outside within [-2, 2].  Returns None when v**2 > 4(beta-1) and the
    whole band is PP (no transition to locate).
    """
    _check_beta(beta)
    vv = intensity(p, v)
    disc = 4.0 - vv * vv / (beta - 1.0)
    if disc < 0.0:
        return None
    lam_c = math.sqrt(disc)
    return (-lam_c, lam_c)


def agreement_grid(beta_list=(2, 3, 5), n_lambda: int = 200, n_p: int = 200) -> dict:
    """Count disagreements between the i1-form and beta/r-form verdicts.

    Sweeps a strictly interior (lam, p) grid per beta; returns
    {beta: disagreement count} plus a "total" entry.  The two forms are
    algebraically identical, so any nonzero count flags a real defect.
    """
    lam = np.linspace(-2.0, 2.0, n_lambda + 2)[1:-1]
    p = np.linspace(0.0, 1.0, n_p + 2)[1:-1]
    band = 4.0 - lam * lam
    vv2 = ((1.0 - p * p) / p) ** 2
    out = {}
    for beta in beta_list:
        i1 = (beta - 1.0) * band[:, None] / vv2[None, :]
        r = 1.0 + vv2[None, :] / band[:, None]
        out[beta] = int(np.sum((i1 >= 1.0) != (beta >= r)))
    out["total"] = sum(out[b] for b in beta_list)
    return out


# ---------------------------------------------------------------------------
# series diagnostics


@dataclass(frozen=True)
class SeriesDiagnostic:
    """Ratio-test evidence for one positive series, in log arithmetic.

    ratio_estimate is exp(OLS slope of ln(term) over the trailing half),
    exact for geometric terms; the verdict uses a 1e-3 dead-band around 1
    with Inconclusive as a first-class outcome.
    """

    label: str
    log_terms: np.ndarray
    log_partial_sums: np.ndarray
    ratio_estimate: float
    verdict: str

    @property
    def partial_sums(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_partial_sums)


def _trailing_slope(y: np.ndarray, x: Optional[np.ndarray] = None) -> float:
    """OLS slope over the trailing half of the points (at least 4)."""
    n = len(y)
    w = max(4, n // 2)
    yw = np.asarray(y[-w:], dtype=float)
    xw = np.arange(w, dtype=float) if x is None else np.asarray(x[-w:], dtype=float)
    xc = xw - xw.mean()
    denom = float(np.dot(xc, xc))
    if denom == 0.0:
        raise ValueError("degenerate abscissa for slope fit")
    return float(np.dot(xc, yw - yw.mean()) / denom)


def _ratio_verdict(log_terms: np.ndarray, label: str) -> SeriesDiagnostic:
    ratio = math.exp(_trailing_slope(log_terms))
    if ratio < 1.0 - RATIO_DEAD_BAND:
        verdict = "Convergent"
    elif ratio > 1.0 + RATIO_DEAD_BAND:
        verdict = "Divergent"
    else:
        verdict = "Inconclusive"
    return SeriesDiagnostic(
        label=label,
        log_terms=log_terms,
        log_partial_sums=np.logaddexp.accumulate(log_terms),
        ratio_estimate=ratio,
        verdict=verdict,
    )


def _geometric_tail_log(log_values: np.ndarray) -> float:
    """Log of the extrapolated sum beyond the last term, from the last 4.

    Fits a geometric ratio to the last four values; a non-decaying fit
    gets no completion (returns -inf) rather than a fabricated one.
    """
    dlog = float(np.mean(np.diff(log_values[-4:])))
    if dlog >= -1e-9:
        return -math.inf
    return float(log_values[-1]) + dlog - math.log1p(-math.exp(dlog))


def lemma_l2_diagnostic(norms, beta: float, n_max: Optional[int] = None):
    """Ratio tests for the two eigenfunction series deciding PP.

    norms is a NormSequence or a raw array of ln t_n**2 with t_n >= 1.
    Series one has terms beta**n / t_n**2; series two has terms
    beta**n * t_n**2 * (sum_{m>=n} t_m**-2)**2, with the inner tail
    completed past the data by geometric extrapolation.  Convergent on
    both is the PP signature.
    """
    log_t2 = np.asarray(getattr(norms, "log_t2", norms), dtype=float)
    if n_max is not None:
        log_t2 = log_t2[:n_max]
    n = len(log_t2)
    if n < MIN_SERIES_TERMS:
        raise ValueError(f"need at least {MIN_SERIES_TERMS} terms, got {n}")
    if np.any(log_t2 < -1e-9):
        raise ValueError("norm data must satisfy t_n >= 1")
    _check_beta(beta)

    k = np.arange(1, n + 1, dtype=float)
    log_beta = math.log(beta)
    first = _ratio_verdict(k * log_beta - log_t2, "inverse-norm series")

    log_inv = -log_t2
    suffix = np.logaddexp.accumulate(log_inv[::-1])[::-1]
    log_tails = np.logaddexp(suffix, _geometric_tail_log(log_inv))
    second = _ratio_verdict(
        k * log_beta + log_t2 + 2.0 * log_tails, "norm-times-tail series"
    )
    return first, second


# ---------------------------------------------------------------------------
# plateau sums over free stretches


@dataclass(frozen=True)
class LastSimonReport:
    """Blockwise plateau sums standing in for the site-resolved series.

    Between consecutive perturbation sites the transfer norm is flat up
    to the conjugation constant, so every site sum collapses to
    stretch_length * plateau_value.  Plateau k (0-based) carries the norm
    after k sites (t_0 = 1 before the first) across the free stretch that
    follows; the final block norm has no resolved stretch and is omitted.

    Arrays, one entry per plateau: log_sites (ln of sites covered so
    far), log_s2_partial (ln sum of stretch * t**2, the running-average
    numerator), log_running_avg, log_esc_partial (ln sum of
    stretch * t**-2), log_npp_terms (ln of stretch * t**2 * tail**2 with
    the within-data inverse-norm tail), log_npp_partial.
    """

    log_sites: np.ndarray
    log_s2_partial: np.ndarray
    log_running_avg: np.ndarray
    log_esc_partial: np.ndarray
    log_npp_terms: np.ndarray
    log_npp_partial: np.ndarray

    def npp_term_ratios(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(np.diff(self.log_npp_terms))

    def __len__(self) -> int:
        return len(self.log_sites)


def last_simon_diagnostics(norms, positions=None) -> LastSimonReport:
    """Plateau partial sums from blockwise norms and site positions."""
    if positions is None:
        positions = norms.positions
    log_t2 = np.asarray(getattr(norms, "log_t2", norms), dtype=float)
    if len(positions) != len(log_t2):
        raise ValueError(
            f"positions ({len(positions)}) and norms ({len(log_t2)}) disagree"
        )
    n = len(positions)
    if n < 2:
        raise ValueError("need at least two blocks for plateau sums")

    # plateau k: value t_k**2 (t_0 = 1), stretch up to the next site
    log_value = np.concatenate([[0.0], log_t2[:-1]])
    lengths = [int(positions[0]) + 1] + [
        int(b) - int(a) for a, b in zip(positions[:-1], positions[1:])
    ]
    log_len = np.array([math.log(length) for length in lengths])
    log_sites = np.array([math.log(int(a) + 1) for a in positions])

    log_s2_partial = np.logaddexp.accumulate(log_len + log_value)
    log_esc_terms = log_len - log_value
    log_esc_partial = np.logaddexp.accumulate(log_esc_terms)
    log_esc_tails = np.logaddexp.accumulate(log_esc_terms[::-1])[::-1]
    log_npp_terms = log_len + log_value + 2.0 * log_esc_tails

    return LastSimonReport(
        log_sites=log_sites,
        log_s2_partial=log_s2_partial,
        log_running_avg=log_s2_partial - log_sites,
        log_esc_partial=log_esc_partial,
        log_npp_terms=log_npp_terms,
        log_npp_partial=np.logaddexp.accumulate(log_npp_terms),
    )


# ---------------------------------------------------------------------------
# continuity / singularity exponents


@dataclass(frozen=True)
class ScalingReport:
    """Fitted growth exponents against the site count l.

    kappa_T is the slope of ln(sum of norms squared) vs ln l (the
    continuity side scales like l**(2 - alpha)); kappa_u the slope of the
    subordinate-solution proxy, ln(sum of inverse norms squared), vs
    ln l.  alpha_continuous_max is the largest grid alpha whose
    continuity ratio stays bounded in trend, alpha_singular_min the
    smallest grid alpha whose singularity ratio vanishes in trend; None
    when no grid point qualifies.
    """

    kappa_T: float
    kappa_u: float
    alpha_continuous_max: Optional[float]
    alpha_singular_min: Optional[float]
    alpha_grid: tuple
    site_decades: float
    slope_tol: float


DEFAULT_ALPHA_GRID = (0.0, 0.25, 0.5, 0.75)


def scaling_exponents(
    report: LastSimonReport,
    alpha_grid=DEFAULT_ALPHA_GRID,
    slope_tol: float = 0.1,
) -> ScalingReport:
    """Fit the continuity/singularity exponents from plateau sums."""
    alpha_grid = tuple(float(a) for a in alpha_grid)
    if not alpha_grid or any(not (0.0 <= a < 1.0) for a in alpha_grid):
        raise ValueError("alpha grid must be nonempty within [0, 1)")
    x = report.log_sites
    if len(x) < 6:
        raise ValueError(f"need at least 6 blocks for exponent fits, got {len(x)}")
    decades = float(x[-1] - x[0]) / math.log(10.0)
    if decades < 2.0:
        raise ValueError(
            f"site range spans {decades:.2f} decades; need >= 2 for a fit"
        )

    kappa_t = _trailing_slope(report.log_s2_partial, x)
    kappa_u = _trailing_slope(report.log_esc_partial, x)

    # residual slopes are affine in alpha, so the grid verdicts follow
    # directly from the fitted exponents
    bounded = [a for a in alpha_grid if kappa_t - (2.0 - a) <= slope_tol]
    vanishing = [a for a in alpha_grid if kappa_u - a < -slope_tol]
    return ScalingReport(
        kappa_T=kappa_t,
        kappa_u=kappa_u,
        alpha_continuous_max=max(bounded) if bounded else None,
        alpha_singular_min=min(vanishing) if vanishing else None,
        alpha_grid=alpha_grid,
        site_decades=decades,
        slope_tol=slope_tol,
    )


# ---------------------------------------------------------------------------
# regime table for stretched sparsity


@dataclass(frozen=True)
class RegimeVerdict:
    """Whole-band verdict for a (sparsity, coupling) pair.

    regime is one of pp-everywhere | sc-dimension-1 | sc-dimension-0 |
    split-band | defer-to-classify | unsupported.  split-band verdicts
    carry the measured thresholds: SC with dimension 0 for
    |lam| < sc_below, PP for |lam| > pp_above.
    """

    regime: str
    note: str = ""
    sc_below: Optional[float] = None
    pp_above: Optional[float] = None
    bracketing: Optional[tuple] = None


def regime_classify(sparsity: SparsityLaw, coupling: CouplingLaw) -> RegimeVerdict:
    """Whole-band regime from the sparsity/coupling hypothesis table."""
    if isinstance(sparsity, ExponentialGaps):
        if isinstance(coupling, ConstantCoupling):
            return RegimeVerdict(
                regime="defer-to-classify",
                note="exponential gaps are energy-resolved; use classify per energy",
            )
        return RegimeVerdict(
            regime="unsupported",
            note="no covered result for exponential gaps with decaying coupling",
        )

    gamma = sparsity.gamma
    if isinstance(coupling, ConstantCoupling):
        if coupling.p == 1.0:
            return RegimeVerdict(
                regime="unsupported", note="free operator: nothing to classify"
            )
        if gamma < 1.0:
            return RegimeVerdict(
                regime="pp-everywhere",
                note="sub-linear stretching localizes the whole band",
            )
        if gamma > 1.0:
            return RegimeVerdict(
                regime="sc-dimension-1",
                note="super-linear stretching keeps full-dimensional continuity",
            )
        return RegimeVerdict(
            regime="defer-to-classify",
            note="gamma = 1 is exponential sparsity with beta = e**c; "
            "use classify per energy",
        )

    # decaying coupling
    if gamma <= 1.0:
        return RegimeVerdict(
            regime="unsupported",
            note="decaying coupling is only covered for gamma > 1",
        )
    if not (
        math.isclose(coupling.gamma, gamma, rel_tol=1e-9)
        and math.isclose(coupling.c, sparsity.c, rel_tol=1e-9)
    ):
        return RegimeVerdict(
            regime="unsupported",
            note="coupling decay must cancel the gap scale (same c and gamma)",
        )
    c_min, c_max, ok = verify_product_bracketing(coupling)
    bracketing = (c_min, c_max, ok)
    if not ok:
        return RegimeVerdict(
            regime="unsupported",
            note="measured coupling product escapes its bracketing constants",
            bracketing=bracketing,
        )
    if coupling.delta == 1.0:
        return RegimeVerdict(
            regime="split-band",
            note="linear residual decay: phase depends on the energy via "
            "(1 - lam**2/4) e**c_eff",
            sc_below=2.0 * math.sqrt(-math.expm1(-c_min)),
            pp_above=2.0 * math.sqrt(-math.expm1(-c_max)),
            bracketing=bracketing,
        )
    return RegimeVerdict(
        regime="sc-dimension-0",
        note="residual norm growth is sub-exponential against the gap scale",
        bracketing=bracketing,
    )

"""One-step transfer matrices and renormalized products across sparse blocks.

Between perturbation sites the one-step matrix is a free hop conjugate to a
rotation, so a whole stretch of g sites collapses to the closed-form
rotation R(g * varphi) obtained from one certified angle reduction; only
the coupling sites contribute the non-rotational shear factor.  Products
are renormalized block by block, with ln t_n**2 as the master copy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .angles import AngleReducer
from .model import (
    CouplingLaw,
    DisorderRealization,
    EnergyPoint,
    coupling_at,
)

__all__ = [
    "TransferBlock",
    "NormSequence",
    "local_matrices",
    "conjugator",
    "p_plus_minus",
    "rotation_block",
    "rotation_power",
    "spectral_norm_2x2",
    "block_norms",
]


def spectral_norm_2x2(mat) -> float:
    """Largest singular value of a real 2x2 matrix, in closed form.

    With g = sum of squared entries and d = det, the squared singular
    values are roots of x**2 - g*x + d**2.
    """
    a, b = mat[0, 0], mat[0, 1]
    c, d = mat[1, 0], mat[1, 1]
    g = a * a + b * b + c * c + d * d
    det = a * d - b * c
    disc = g * g - 4.0 * det * det
    if disc < 0.0:  # roundoff only; g**2 >= 4 det**2 always
        disc = 0.0
    return math.sqrt(0.5 * (g + math.sqrt(disc)))


@dataclass(frozen=True)
class TransferBlock:
    """A 2x2 real matrix with its exact expected determinant."""

    mat: np.ndarray
    det_expected: float

    def __matmul__(self, other: "TransferBlock") -> "TransferBlock":
        return TransferBlock(self.mat @ other.mat, self.det_expected * other.det_expected)

    @property
    def det(self) -> float:
        m = self.mat
        return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])

    @property
    def det_residual(self) -> float:
        return abs(self.det - self.det_expected) / max(1.0, abs(self.det_expected))

    @property
    def spectral_norm(self) -> float:
        return spectral_norm_2x2(self.mat)


def _block(rows, det_expected: float) -> TransferBlock:
    return TransferBlock(np.array(rows, dtype=float), float(det_expected))


def local_matrices(lam: float, q: float):
    """One-step matrices (into a coupling site, out of it, free hop).

    Returns (step_minus, step_plus, step_free) with determinants
    1/q, q and 1.
    """
    if not (0 < q <= 1):
        raise ValueError(f"coupling must lie in (0, 1], got {q}")
    step_minus = _block([[lam / q, -1.0 / q], [1.0, 0.0]], 1.0 / q)
    step_plus = _block([[lam, -q], [1.0, 0.0]], q)
    step_free = _block([[lam, -1.0], [1.0, 0.0]], 1.0)
    return step_minus, step_plus, step_free


def conjugator(varphi: float):
    """Change of frame (U, U_inverse) turning the free hop into the
    clockwise rotation R(varphi); requires sin(varphi) != 0."""
    s, c = math.sin(varphi), math.cos(varphi)
    if s == 0.0:
        raise ValueError("varphi must not be a multiple of pi")
    u = _block([[0.0, s], [1.0, -c]], -s)
    u_inv = _block([[c / s, 1.0], [1.0 / s, 0.0]], -1.0 / s)
    return u, u_inv


def p_plus_minus(varphi: float, q: float) -> TransferBlock:
    """Unimodular shear left behind by one coupling site in the rotating
    frame: [[q, 0], [(1 - q**2)/q * cot(varphi), 1/q]]."""
    if not (0 < q <= 1):
        raise ValueError(f"coupling must lie in (0, 1], got {q}")
    s = math.sin(varphi)
    if s == 0.0:
        raise ValueError("varphi must not be a multiple of pi")
    cot = math.cos(varphi) / s
    return _block([[q, 0.0], [(1.0 - q * q) / q * cot, 1.0 / q]], 1.0)


def rotation_block(reduced: float, parity: int) -> TransferBlock:
    """Clockwise rotation by a reduced angle, with the half-turn sign."""
    c, s = math.cos(reduced), math.sin(reduced)
    sign = -1.0 if parity & 1 else 1.0
    return _block([[sign * c, sign * s], [-sign * s, sign * c]], 1.0)


def rotation_power(
    m: int,
    varphi: float,
    precision_bits: Optional[int] = None,
    reducer: Optional[AngleReducer] = None,
) -> TransferBlock:
    """R(m * varphi) for integer m >= 0 via one certified reduction,
    never m repeated multiplications."""
    if reducer is None:
        if precision_bits is None:
            precision_bits = int(m).bit_length() + 128
        reducer = AngleReducer.from_varphi(varphi, precision_bits)
    reduced, parity, _ = reducer.reduce(m)
    return rotation_block(reduced, parity)


@dataclass(frozen=True)
class NormSequence:
    """Per-block norms t_n = ||U T(a_n + 1) U^{-1}|| in log scale.

    log_t2 is the master copy (t itself overflows once n ln r exceeds
    ~709); det_residuals tracks |det - 1| of the product of factor
    determinants through each block.  (Multiplication roundoff corrupts
    only the small singular value of a long product, which never enters
    t_n, so factor determinants are the meaningful drift monitor.)
    """

    positions: tuple
    couplings: tuple
    log_t2: np.ndarray
    det_residuals: np.ndarray
    min_certified_bits: int
    log_gx2: Optional[np.ndarray] = None  # ln ||G_n x0||**2 when x0 was given

    @property
    def t(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(0.5 * self.log_t2)

    def __len__(self) -> int:
        return len(self.log_t2)


def block_norms(
    realization: DisorderRealization,
    energy: EnergyPoint,
    coupling: CouplingLaw,
    precision_bits: Optional[int] = None,
    reducer: Optional[AngleReducer] = None,
    x0=None,
) -> NormSequence:
    """Spectral norms of the conjugated products through each block.

    The product through block n is R(varphi) P(q_n) R(g_n varphi) ...
    P(q_1) R((a_1 + 1) varphi) with g_k the admissible gaps; the leading
    rotation never changes a spectral norm, so t_n = ||P(q_n) B_n|| with
    B_n the running (renormalized) product.  If x0 is given, the action
    ln ||G_n x0||**2 is recorded as well (Pruefer radius cross-check).
    """
    positions = realization.positions
    n_blocks = len(positions)
    if reducer is None:
        if precision_bits is None:
            precision_bits = int(positions[-1]).bit_length() + 128
        reducer = AngleReducer.from_energy(energy, precision_bits)

    qs = tuple(coupling_at(coupling, j) for j in range(1, n_blocks + 1))
    gaps = [positions[0] + 1] + [b - a for a, b in zip(positions[:-1], positions[1:])]
    reductions = reducer.reduce_many(gaps)
    min_cert = min(cert for _, _, cert in reductions)

    first_rot = rotation_block(*reductions[0][:2]).mat
    b = first_rot
    log_scale = 0.0
    log_det_factors = math.log(abs(np.linalg.det(first_rot)))
    vec = None
    if x0 is not None:
        vec = np.asarray(x0, dtype=float).reshape(2)
        nrm = math.hypot(vec[0], vec[1])
        if nrm == 0.0:
            raise ValueError("x0 must be nonzero")
        vec = b @ (vec / nrm)

    log_t2 = np.empty(n_blocks)
    det_res = np.empty(n_blocks)
    log_gx2 = np.empty(n_blocks) if x0 is not None else None

    for n in range(n_blocks):
        shear = p_plus_minus(energy.varphi, qs[n]).mat
        c = shear @ b
        s = spectral_norm_2x2(c)
        log_t2[n] = 2.0 * (math.log(s) + log_scale)
        log_det_factors += math.log(
            abs(shear[0, 0] * shear[1, 1] - shear[0, 1] * shear[1, 0])
        )
        det_res[n] = abs(math.expm1(log_det_factors))
        if vec is not None:
            w = shear @ vec
            log_gx2[n] = 2.0 * (math.log(math.hypot(w[0], w[1])) + log_scale)
        if n + 1 < n_blocks:
            rot = rotation_block(*reductions[n + 1][:2]).mat
            log_det_factors += math.log(abs(np.linalg.det(rot)))
            b = rot @ (c / s)
            if vec is not None:
                vec = rot @ (w / s)
        log_scale += math.log(s)

    return NormSequence(
        positions=positions,
        couplings=qs,
        log_t2=log_t2,
        det_residuals=det_res,
        min_certified_bits=min_cert,
        log_gx2=log_gx2,
    )

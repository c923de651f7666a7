"""Orthonormal bases, projectors and principal angles between column spaces."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg

from ._validation import check_matrix, check_weights

#: Singular values below ``RANK_RTOL * s_max`` count as zero.
RANK_RTOL = 1e-8


class OrthonormalBasis(NamedTuple):
    Q: np.ndarray
    rank: int


def orthonormal_basis(M, tol: float = RANK_RTOL) -> OrthonormalBasis:
    """Orthonormal basis of ``Col(M)`` via a thin SVD with relative rank cutoff."""
    M = check_matrix(M, "M")
    U, s, _ = scipy.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise ValueError("matrix is identically zero")
    rank = int(np.count_nonzero(s > tol * s[0]))
    return OrthonormalBasis(U[:, :rank], rank)


def _cosines(H1, H2) -> np.ndarray:
    Q1 = orthonormal_basis(H1).Q
    Q2 = orthonormal_basis(H2).Q
    if Q1.shape[0] != Q2.shape[0]:
        raise ValueError("matrices must have the same number of rows")
    C = Q1.T @ Q2
    # both orientations so that swapping the arguments is bitwise symmetric
    s = np.maximum(np.sort(scipy.linalg.svdvals(C)), np.sort(scipy.linalg.svdvals(C.T)))
    return np.clip(s, 0.0, 1.0)


def principal_angles(H1, H2) -> np.ndarray:
    """All principal angles between ``Col(H1)`` and ``Col(H2)``, ascending."""
    return np.sort(np.arccos(_cosines(H1, H2)))


def smallest_principal_angle(H1, H2) -> float:
    """Smallest principal angle: ``arccos`` of the largest cosine."""
    return float(np.arccos(_cosines(H1, H2).max()))


def largest_principal_angle(H1, H2) -> float:
    """Largest principal angle between two column spaces of equal dimension.

    Computed from the sine form ``||(I - Q1 Q1^T) Q2||_2`` which is accurate
    near zero, where the cosine form loses half the digits.
    """
    Q1 = orthonormal_basis(H1).Q
    Q2 = orthonormal_basis(H2).Q
    if Q1.shape[0] != Q2.shape[0]:
        raise ValueError("matrices must have the same number of rows")
    return float(np.arcsin(min(1.0, _sine(Q1, Q2))))


def _sine(Q1: np.ndarray, Q2: np.ndarray) -> float:
    def one_way(P, Q):
        return scipy.linalg.norm(Q - P @ (P.T @ Q), 2)

    if Q1.shape[1] > Q2.shape[1]:
        return one_way(Q1, Q2)
    if Q1.shape[1] < Q2.shape[1]:
        return one_way(Q2, Q1)
    return max(one_way(Q1, Q2), one_way(Q2, Q1))


def subspace_angle(H1, H2) -> float:
    """Separation angle used for MTD design (the largest principal angle).

    The smallest principal angle between measurement matrices that differ
    only on a few D-FACTS branches is always zero: the column spaces share
    every direction that leaves the perturbed branch flows unchanged. The
    largest angle is the one that ranges over ``[0, pi/2]`` in that setting
    and is the one bounded by ``||r_a|| <= sin(angle) ||a||``.
    """
    return largest_principal_angle(H1, H2)


def projector(H, W=None) -> np.ndarray:
    """W-orthogonal projector ``H (H^T W H)^{-1} H^T W`` onto ``Col(H)``."""
    H = check_matrix(H, "H")
    w = check_weights(W, H.shape[0])
    rank = orthonormal_basis(H).rank
    if rank < H.shape[1]:
        raise np.linalg.LinAlgError(f"H is rank deficient ({rank} < {H.shape[1]})")
    HtW = H.T * w
    return H @ np.linalg.solve(HtW @ H, HtW)


def rank_of_augmented(H, a, tol: float = RANK_RTOL) -> tuple[int, int]:
    """``(rank(H), rank([H a]))`` with the same relative cutoff."""
    H = check_matrix(H, "H")
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.shape[0] != H.shape[0]:
        raise ValueError(f"vector length {a.shape[0]} does not match {H.shape[0]} rows")
    r1 = orthonormal_basis(H, tol).rank
    s = scipy.linalg.svdvals(np.column_stack([H, a]))
    # cutoff anchored to H so a tiny a cannot shrink the reference scale
    ref = max(s[0], scipy.linalg.svdvals(H)[0])
    r2 = int(np.count_nonzero(s > tol * ref))
    return r1, max(r1, r2)

"""Stealthy false-data-injection attacks built from an attacker's measurement matrix."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_matrix, check_random_state, check_weights
from .estimation import MeasurementModel, build_measurement_matrix, full_measurement_matrix
from .grid import GridCase
from .subspace import RANK_RTOL, projector, rank_of_augmented


@dataclass(frozen=True, eq=False)
class AttackVector:
    """Injection ``a = H_source c``."""

    a: np.ndarray
    c: np.ndarray
    source: str = "H_attacker"
    rel_magnitude: float = float("nan")

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.a, dtype=dtype)

    def scaled(self, factor: float) -> "AttackVector":
        return AttackVector(self.a * factor, self.c * factor, self.source,
                            self.rel_magnitude * abs(factor))


def make_attack(H_attacker, c, z_ref=None, source: str = "H_attacker") -> AttackVector:
    """Attack for an explicit coefficient vector; rejects the zero attack."""
    H = check_matrix(H_attacker, "H_attacker")
    c = np.asarray(c, dtype=float).reshape(-1)
    if c.shape[0] != H.shape[1]:
        raise ValueError(f"c has {c.shape[0]} entries, H has {H.shape[1]} columns")
    a = H @ c
    if not np.any(a):
        raise ValueError("zero attack vector")
    rel = float("nan") if z_ref is None else np.abs(a).sum() / np.abs(z_ref).sum()
    return AttackVector(a, c, source, rel)


def generate_attack(H_attacker, z_ref, target_rel: float = 0.08, rng=None,
                    max_retries: int = 10, source: str = "H_attacker") -> AttackVector:
    """Gaussian ``c`` rescaled so that ``||a||_1 / ||z_ref||_1 == target_rel``."""
    if not target_rel > 0:
        raise ValueError("target_rel must be positive")
    H = check_matrix(H_attacker, "H_attacker")
    z_norm = np.abs(np.asarray(z_ref, dtype=float)).sum()
    if z_norm == 0:
        raise ValueError("reference measurement vector is zero")
    rng = check_random_state(rng)
    for _ in range(max_retries):
        c = rng.standard_normal(H.shape[1])
        a = H @ c
        a_norm = np.abs(a).sum()
        if a_norm > 0:
            s = target_rel * z_norm / a_norm
            a = a * s
            return AttackVector(a, c * s, source, float(np.abs(a).sum() / z_norm))
    raise RuntimeError(f"no nonzero attack after {max_retries} draws")


def generate_attacks(H_attacker, z_ref, n: int, target_rel: float = 0.08, seed=0) -> list[AttackVector]:
    """``n`` attacks, attack ``k`` drawn from its own stream ``(seed, k)``."""
    return [generate_attack(H_attacker, z_ref, target_rel, attack_stream(seed, k)) for k in range(n)]


def attack_stream(seed, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, k)))


def is_undetectable(H_defender, attack, tol: float = RANK_RTOL) -> bool:
    """True iff the injection lies in ``Col(H_defender)``."""
    a = np.asarray(attack, dtype=float)
    r1, r2 = rank_of_augmented(H_defender, a, tol)
    return r1 == r2


def attack_residual_component(H_defender, W, attack) -> np.ndarray:
    """Attack part of the post-MTD residual, ``(I - Gamma') a``."""
    a = np.asarray(attack, dtype=float)
    return a - projector(H_defender, W) @ a


def weighted_norm(v, W=None) -> float:
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(v @ (check_weights(W, v.shape[0]) * v)))


def single_branch_perturbation(grid: GridCase, branch: int, eta: float) -> np.ndarray:
    """Default reactances with branch ``branch`` (0-based) scaled by ``1 + eta``."""
    x = grid.x.copy()
    x[branch] *= 1.0 + eta
    return x


def four_bus_demo(grid4: GridCase, attacks=((0, 1, 1, 1), (0, 0, 0, 1)), eta: float = 0.2) -> np.ndarray:
    """Noiseless BDD residuals (per unit) for each (attack, single-branch perturbation).

    Coefficient vectors include the reference bus angle. Row ``i`` is attack
    ``i``, column ``j`` perturbs branch ``j`` by ``eta``. Weights are unity;
    entries for attacks that stay in the perturbed column space are exactly 0.
    """
    H_full = full_measurement_matrix(grid4)
    table = np.zeros((len(attacks), grid4.n_branch))
    for j in range(grid4.n_branch):
        x = single_branch_perturbation(grid4, j, eta)
        model = MeasurementModel(build_measurement_matrix(grid4, x), 0.0)
        for i, c in enumerate(attacks):
            a = H_full @ np.asarray(c, dtype=float)
            if not is_undetectable(model.H, a):
                table[i, j] = np.linalg.norm(model.residual_operator @ a) / grid4.base_mva
    return table



def orthogonal_defender(H_attacker, n_cols: int | None = None, rng=None) -> np.ndarray:
    """A defender matrix whose column space is orthogonal to ``Col(H_attacker)``.

    Columns are random combinations of an orthonormal basis of the
    complement, so every nonzero attack ``a = H_attacker c`` survives the
    defender's projection in full. Requires ``M - rank >= n_cols``.
    """
    H = check_matrix(H_attacker, "H_attacker")
    k = H.shape[1] if n_cols is None else int(n_cols)
    U, s, _ = np.linalg.svd(H, full_matrices=True)
    rank = int(np.count_nonzero(s > RANK_RTOL * s[0]))
    complement = U[:, rank:]
    if complement.shape[1] < k:
        raise ValueError(f"complement has dimension {complement.shape[1]} < {k}")
    mix = check_random_state(rng).standard_normal((complement.shape[1], k))
    return complement @ mix

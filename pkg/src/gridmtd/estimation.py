"""DC measurement model, WLS state estimation and residual-based bad-data detection."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, OutlierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_matrix, check_probability, check_random_state
from .grid import GridCase, incidence_matrix, is_connected, susceptance_matrices
from .subspace import orthonormal_basis

#: Default per-sensor noise standard deviation in MW.
DEFAULT_NOISE_SIGMA = 0.1


class NotCalibratedError(RuntimeError):
    """The detector threshold has not been calibrated yet."""


def full_measurement_matrix(grid: GridCase, x=None) -> np.ndarray:
    """``[D A^T; -D A^T; A D A^T]`` in MW per radian, all ``N`` bus columns."""
    D, B = susceptance_matrices(grid, x)
    DAt = D @ incidence_matrix(grid).T
    return grid.base_mva * np.vstack([DAt, -DAt, B])


def build_measurement_matrix(grid: GridCase, x=None) -> np.ndarray:
    """Forward flows, reverse flows and injections with the reference column removed.

    Shape ``(2L + N, N - 1)``, MW per radian.
    """
    if not is_connected(grid):
        raise ValueError("grid is not connected; the measurement matrix is rank deficient")
    return full_measurement_matrix(grid, x)[:, grid.non_ref]


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    """Measurement matrix, noise level and (optionally) a calibrated threshold.

    ``weighted`` selects the residual norm: the W-weighted norm
    ``sqrt(r^T W r)`` (default) or the plain Euclidean norm.
    """

    H: np.ndarray
    noise_sigma: np.ndarray
    tau: float | None = None
    alpha: float | None = None
    weighted: bool = True
    layout: tuple[tuple[str, int], ...] = field(default=())

    def __post_init__(self):
        H = check_matrix(self.H, "H")
        sigma = np.broadcast_to(np.asarray(self.noise_sigma, dtype=float), (H.shape[0],)).copy()
        if np.any(sigma < 0):
            raise ValueError("noise_sigma must be nonnegative")
        H.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "noise_sigma", sigma)
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.alpha is not None:
            check_probability(self.alpha, "alpha")

    @classmethod
    def from_grid(cls, grid: GridCase, x=None, noise_sigma=DEFAULT_NOISE_SIGMA,
                  weighted: bool = True) -> "MeasurementModel":
        H = build_measurement_matrix(grid, x)
        L, N = grid.n_branch, grid.n_bus
        model = cls(H, noise_sigma, weighted=weighted,
                    layout=(("flow_from", L), ("flow_to", L), ("injection", N)))
        if model.rank < N - 1:
            raise ValueError("measurement matrix is rank deficient")
        return model

    @property
    def n_meas(self) -> int:
        return self.H.shape[0]

    @property
    def n_state(self) -> int:
        return self.H.shape[1]

    @cached_property
    def rank(self) -> int:
        return orthonormal_basis(self.H).rank

    @cached_property
    def weights(self) -> np.ndarray:
        """Diagonal of W: inverse noise variances (unit weights for noiseless sensors)."""
        sigma = self.noise_sigma
        if np.all(sigma > 0):
            return 1.0 / sigma**2
        if np.all(sigma == 0):
            return np.ones_like(sigma)
        raise ValueError("mixed zero and nonzero noise levels give an undefined weighting")

    @cached_property
    def _gain(self) -> np.ndarray:
        HtW = self.H.T * self.weights
        G = HtW @ self.H
        if np.linalg.matrix_rank(G) < self.n_state:
            raise np.linalg.LinAlgError("singular normal equations")
        return np.linalg.solve(G, HtW)

    @cached_property
    def residual_operator(self) -> np.ndarray:
        """``I - Gamma`` with ``Gamma = H (H^T W H)^{-1} H^T W``."""
        return np.eye(self.n_meas) - self.H @ self._gain

    @property
    def norm_weights(self) -> np.ndarray:
        return self.weights if self.weighted else np.ones(self.n_meas)

    @property
    def calibrated(self) -> bool:
        return self.tau is not None

    def with_threshold(self, tau: float, alpha: float | None = None) -> "MeasurementModel":
        return replace(self, tau=float(tau), alpha=alpha)

    def norm(self, r: np.ndarray) -> np.ndarray:
        """Residual norm (weighted or plain) along the last axis."""
        return np.sqrt(np.einsum("...i,i,...i->...", r, self.norm_weights, r))


def simulate_measurements(model: MeasurementModel, theta, rng=None, size: int | None = None):
    """``z = H theta + n`` with independent Gaussian sensor noise."""
    rng = check_random_state(rng)
    clean = model.H @ np.asarray(theta, dtype=float)
    shape = (model.n_meas,) if size is None else (size, model.n_meas)
    return clean + rng.standard_normal(shape) * model.noise_sigma


def wls_estimate(model: MeasurementModel, z) -> np.ndarray:
    """Weighted least-squares state; accepts one vector or a batch of rows."""
    z = np.asarray(z, dtype=float)
    return z @ model._gain.T


def residual_vector(model: MeasurementModel, z) -> np.ndarray:
    return np.asarray(z, dtype=float) @ model.residual_operator.T


def residual(model: MeasurementModel, z):
    """BDD residual ``||z - H theta_hat||`` (scalar, or one per row for a batch)."""
    r = model.norm(residual_vector(model, z))
    return float(r) if np.ndim(r) == 0 else r


def noise_residuals(model: MeasurementModel, n_trials: int, rng=None,
                    batch: int = 20_000) -> np.ndarray:
    """Residual norms of attack-free measurements (theta = 0, state-invariant)."""
    rng = check_random_state(rng)
    P = model.residual_operator.T
    out = np.empty(n_trials)
    for start in range(0, n_trials, batch):
        k = min(batch, n_trials - start)
        n = rng.standard_normal((k, model.n_meas)) * model.noise_sigma
        out[start:start + k] = model.norm(n @ P)
    return out


def calibrate_threshold(model: MeasurementModel, alpha: float, n_trials: int, rng=None) -> float:
    """Empirical ``(1 - alpha)`` quantile of noise-only residuals."""
    alpha = check_probability(alpha, "alpha")
    if n_trials < 10 / alpha:
        raise ValueError(f"n_trials={n_trials} is too small for alpha={alpha}; need >= {10 / alpha:.0f}")
    if np.all(model.noise_sigma == 0):
        raise ValueError("cannot calibrate a threshold without measurement noise")
    r = noise_residuals(model, n_trials, rng)
    return float(np.quantile(r, 1.0 - alpha, method="higher"))


def calibrate(model: MeasurementModel, alpha: float, n_trials: int, rng=None) -> MeasurementModel:
    return model.with_threshold(calibrate_threshold(model, alpha, n_trials, rng), alpha)


def detection_rate(model: MeasurementModel, a, n_trials: int, rng=None) -> float:
    """Monte Carlo ``P(r >= tau)`` for measurements ``H theta + n + a``."""
    if not model.calibrated:
        raise NotCalibratedError("model has no threshold; call calibrate() first")
    rng = check_random_state(rng)
    a = np.zeros(model.n_meas) if a is None else np.asarray(getattr(a, "a", a), dtype=float)
    ra = model.residual_operator @ a
    n = rng.standard_normal((n_trials, model.n_meas)) * model.noise_sigma
    r = model.norm(n @ model.residual_operator.T + ra)
    return float(np.mean(r >= model.tau))


def detection_probability(model: MeasurementModel, attack, n_trials: int = 1000, rng=None) -> float:
    if n_trials < 1000:
        raise ValueError("n_trials must be at least 1000")
    return detection_rate(model, attack, n_trials, rng)


def detection_probability_chi2(model: MeasurementModel, attack) -> float:
    """Closed-form cross-check: the squared whitened residual is noncentral chi-square.

    Degrees of freedom ``M - rank(H)``, noncentrality ``||r_a||_W^2``. Only
    valid for the weighted norm with W equal to the inverse noise covariance.
    """
    if not model.calibrated:
        raise NotCalibratedError("model has no threshold; call calibrate() first")
    if not model.weighted:
        raise ValueError("the chi-square form needs the W-weighted residual norm")
    a = np.asarray(getattr(attack, "a", attack), dtype=float)
    nc = float(model.norm(model.residual_operator @ a)) ** 2
    df = model.n_meas - model.rank
    if nc == 0.0:
        return float(stats.chi2.sf(model.tau**2, df))
    return float(stats.ncx2.sf(model.tau**2, df, nc))


class WLSStateEstimator(TransformerMixin, BaseEstimator):
    """Weighted least-squares DC state estimator.

    ``transform`` maps measurement rows to phase-angle estimates (reference
    bus excluded); ``inverse_transform`` maps states back to noiseless
    measurements.
    """

    def __init__(self, H=None, noise_sigma=DEFAULT_NOISE_SIGMA):
        self.H = H
        self.noise_sigma = noise_sigma

    def fit(self, Z=None, y=None):
        if self.H is None:
            raise ValueError("H must be set before fitting")
        self.model_ = MeasurementModel(self.H, self.noise_sigma)
        if self.model_.rank < self.model_.n_state:
            raise np.linalg.LinAlgError("H is rank deficient")
        self.n_features_in_ = self.model_.n_meas
        return self

    def transform(self, Z):
        check_is_fitted(self, "model_")
        Z = check_array(Z)
        if Z.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} measurements, got {Z.shape[1]}")
        return wls_estimate(self.model_, Z)

    def inverse_transform(self, Theta):
        check_is_fitted(self, "model_")
        return check_array(Theta) @ self.model_.H.T

    def residuals(self, Z):
        check_is_fitted(self, "model_")
        return residual(self.model_, check_array(Z))


class BadDataDetector(OutlierMixin, BaseEstimator):
    """Residual-threshold bad-data detector.

    ``fit(Z)`` sets the threshold to the ``1 - alpha`` quantile of residuals
    of the attack-free measurement rows in ``Z``; with ``Z=None`` those rows
    are simulated (``n_trials`` draws of Gaussian noise). Following the
    outlier-detector convention, ``predict`` returns -1 for an alarm and +1
    otherwise, and ``decision_function`` is ``tau - r``.
    """

    def __init__(self, H=None, noise_sigma=DEFAULT_NOISE_SIGMA, alpha=5e-4,
                 n_trials=100_000, weighted=True, random_state=None):
        self.H = H
        self.noise_sigma = noise_sigma
        self.alpha = alpha
        self.n_trials = n_trials
        self.weighted = weighted
        self.random_state = random_state

    def fit(self, Z=None, y=None):
        if self.H is None:
            raise ValueError("H must be set before fitting")
        alpha = check_probability(self.alpha, "alpha")
        model = MeasurementModel(self.H, self.noise_sigma, weighted=self.weighted)
        if Z is None:
            tau = calibrate_threshold(model, alpha, self.n_trials, self.random_state)
        else:
            Z = check_array(Z)
            if len(Z) < 10 / alpha:
                raise ValueError(f"need at least {10 / alpha:.0f} calibration rows")
            tau = float(np.quantile(residual(model, Z), 1.0 - alpha, method="higher"))
        self.model_ = model.with_threshold(tau, alpha)
        self.tau_ = tau
        self.n_features_in_ = model.n_meas
        return self

    def score_samples(self, Z):
        """Residual norms (larger is more anomalous)."""
        check_is_fitted(self, "model_")
        Z = check_array(Z)
        return residual(self.model_, Z)

    def decision_function(self, Z):
        return self.tau_ - self.score_samples(Z)

    def predict(self, Z):
        return np.where(self.decision_function(Z) > 0, 1, -1)

    def detection_probability(self, attack, n_trials=1000, rng=None) -> float:
        check_is_fitted(self, "model_")
        return detection_probability(self.model_, attack, n_trials, rng)

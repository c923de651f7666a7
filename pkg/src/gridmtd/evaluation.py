"""Monte Carlo effectiveness of MTD perturbations and the cost/effectiveness studies.

Random streams are derived from the master seed with fixed spawn keys so
that results do not depend on evaluation order:

* ``(0, k)``  coefficient vector of attack ``k``
* ``(1, k)``  start ``k`` of the reactance search (see :mod:`gridmtd.opf`)
* ``(2, k)``  measurement noise used to score attack ``k``
* ``(3,)``    threshold calibration noise
* ``(4, k)``  random perturbation plan ``k``
* ``(5,)``    false-positive validation noise
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import stats

from .attack import generate_attacks
from .estimation import DEFAULT_NOISE_SIGMA, MeasurementModel, build_measurement_matrix
from .grid import GridCase, LoadTrace, disaggregate_load
from .opf import DispatchSolution, InfeasibleError, baseline_opf, mtd_opf
from .subspace import orthonormal_basis, subspace_angle

log = logging.getLogger(__name__)

DEFAULT_GAMMAS = tuple(round(0.05 * k, 2) for k in range(10))
DEFAULT_DELTAS = (0.5, 0.7, 0.9, 0.95)


@dataclass(frozen=True)
class EvalConfig:
    n_attacks: int = 1000
    n_noise: int = 1000
    alpha: float = 5e-4
    rel_magnitude: float = 0.08
    deltas: tuple[float, ...] = DEFAULT_DELTAS
    gammas: tuple[float, ...] = DEFAULT_GAMMAS
    seed: int = 0
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    n_calibration: int = 100_000
    n_starts: int = 100
    weighted: bool = True

    def __post_init__(self):
        object.__setattr__(self, "deltas", tuple(float(d) for d in self.deltas))
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        for name in ("n_attacks", "n_noise", "n_calibration", "n_starts"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.rel_magnitude > 0:
            raise ValueError("rel_magnitude must be positive")
        if not self.noise_sigma > 0:
            raise ValueError("noise_sigma must be positive")
        if not self.deltas or not self.gammas:
            raise ValueError("deltas and gammas must be nonempty")
        if any(not 0 <= d <= 1 for d in self.deltas):
            raise ValueError("deltas must lie in [0, 1]")
        if any(not 0 <= g <= math.pi / 2 for g in self.gammas):
            raise ValueError("gammas must lie in [0, pi/2]")
        if self.n_calibration < 10 / self.alpha:
            raise ValueError("n_calibration too small for alpha")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, **changes) -> "EvalConfig":
        return dataclasses.replace(self, **changes)


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass(frozen=True)
class Estimate:
    value: float
    half_width: float
    n: int


def wilson_half_width(successes: int, n: int, level: float = 0.95) -> float:
    ci = stats.binomtest(int(successes), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float((ci.high - ci.low) / 2)


NOISE_CACHE_BYTES = 512 * 2**20


class DetectionSimulator:
    """Scores attacks against a defender matrix with a calibrated residual test.

    For the W-weighted norm the whitened residual of ``v = n/sigma + a/sigma``
    is the projection of ``v`` onto the complement of ``Col(S H)`` with
    ``S = diag(1/sigma)``, so ``r^2 = ||v||^2 - ||U^T v||^2`` for an
    orthonormal basis ``U`` of ``Col(S H)``. This is the same residual as
    :func:`gridmtd.estimation.residual`, computed without the ``M x M``
    projector.
    """

    def __init__(self, cfg: EvalConfig, cache_bytes: int = NOISE_CACHE_BYTES):
        self.cfg = cfg
        self._cache_bytes = cache_bytes
        self._noise_cache: dict[int, np.ndarray] = {}
        self._energy_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def _attack_noise(self, k: int, m: int) -> np.ndarray:
        # scoring many defender matrices against one attack set reuses the draws
        eps = self._noise_cache.get(k)
        if eps is None or eps.shape[1] != m:
            eps = stream(self.cfg.seed, 2, k).standard_normal((self.cfg.n_noise, m))
            if (len(self._noise_cache) + 1) * eps.nbytes <= self._cache_bytes:
                self._noise_cache[k] = eps
        return eps

    @cached_property
    def _calibration_noise(self) -> np.ndarray:
        return stream(self.cfg.seed, 3).standard_normal((self.cfg.n_calibration, self._m))

    def model(self, H) -> MeasurementModel:
        """Defender model for ``H`` with its threshold calibrated at ``cfg.alpha``."""
        cfg = self.cfg
        model = MeasurementModel(H, cfg.noise_sigma, weighted=cfg.weighted)
        self._m = model.n_meas
        r = self._norms(model, self._calibration_noise)
        tau = float(np.quantile(r, 1.0 - cfg.alpha, method="higher"))
        return model.with_threshold(tau, cfg.alpha)

    def _norms(self, model: MeasurementModel, eps: np.ndarray, a_white=None) -> np.ndarray:
        v = eps if a_white is None else eps + a_white
        if model.weighted:
            U = orthonormal_basis(model.H / model.noise_sigma[:, None]).Q
            r2 = np.einsum("ij,ij->i", v, v) - np.sum((v @ U) ** 2, axis=1)
            return np.sqrt(np.maximum(r2, 0.0))
        r = (v * model.noise_sigma) @ model.residual_operator.T
        return np.linalg.norm(r, axis=1)

    def detection_probabilities(self, model: MeasurementModel, attacks: np.ndarray) -> np.ndarray:
        """Monte Carlo ``P(r >= tau)`` for each attack row; noise for row ``k`` from ``(seed, 2, k)``."""
        if not model.calibrated:
            raise RuntimeError("defender model is not calibrated")
        attacks = np.atleast_2d(np.asarray(attacks, dtype=float))
        T = self.cfg.n_noise
        out = np.empty(len(attacks))
        U = orthonormal_basis(model.H / model.noise_sigma[:, None]).Q if model.weighted else None
        for k, a in enumerate(attacks):
            a_white = a / model.noise_sigma
            eps = self._attack_noise(k, model.n_meas)
            if U is None:
                r = self._norms(model, eps, a_white)
            else:
                # ||eps + a||^2 does not depend on the defender, only the projection does
                v_sq = self._total_energy(k, eps, a_white)
                proj = eps @ U + a_white @ U
                r = np.sqrt(np.maximum(v_sq - np.einsum("ij,ij->i", proj, proj), 0.0))
            out[k] = np.count_nonzero(r >= model.tau) / T
        return out

    def _total_energy(self, k: int, eps: np.ndarray, a_white: np.ndarray) -> np.ndarray:
        hit = self._energy_cache.get(k)
        if hit is not None and np.array_equal(hit[0], a_white):
            return hit[1]
        v = eps + a_white
        v_sq = np.einsum("ij,ij->i", v, v)
        if k in self._noise_cache:
            self._energy_cache[k] = (a_white.copy(), v_sq)
        return v_sq


def false_positive_rate(model: MeasurementModel, cfg: EvalConfig, n_trials: int | None = None) -> Estimate:
    """Alarm rate on fresh attack-free noise (stream ``(seed, 5)``), independent of calibration."""
    if not model.calibrated:
        raise RuntimeError("defender model is not calibrated")
    n = cfg.n_calibration if n_trials is None else int(n_trials)
    sim = DetectionSimulator(cfg)
    eps = stream(cfg.seed, 5).standard_normal((n, model.n_meas))
    k = int(np.count_nonzero(sim._norms(model, eps) >= model.tau))
    return Estimate(k / n, wilson_half_width(k, n), n)


def effectiveness_from_pd(pd: np.ndarray, delta: float) -> Estimate:
    """Fraction of attacks whose detection probability exceeds ``delta``."""
    k = int(np.count_nonzero(pd > delta))
    n = len(pd)
    return Estimate(k / n, wilson_half_width(k, n), n)


def attack_matrix(H_attacker, z_ref, cfg: EvalConfig) -> np.ndarray:
    atts = generate_attacks(H_attacker, z_ref, cfg.n_attacks, cfg.rel_magnitude, cfg.seed)
    return np.array([a.a for a in atts])


def effectiveness(model_defender: MeasurementModel, H_attacker, cfg: EvalConfig, delta: float,
                  z_ref=None, attacks=None) -> Estimate:
    """Effectiveness at a single ``delta`` for a calibrated defender model.

    ``z_ref`` (the attack-free measurement vector that fixes the attack
    magnitude) is required unless precomputed ``attacks`` are supplied.
    """
    if not model_defender.calibrated:
        raise RuntimeError("defender model is not calibrated")
    if attacks is None:
        if z_ref is None:
            raise ValueError("z_ref is required to scale the attacks")
        attacks = attack_matrix(H_attacker, z_ref, cfg)
    pd = DetectionSimulator(cfg).detection_probabilities(model_defender, attacks)
    return effectiveness_from_pd(pd, delta)


# -- reports -----------------------------------------------------------------

@dataclass
class EvalReport:
    """Tabular result with run metadata; ``rows`` share the keys in ``columns``."""

    kind: str
    columns: list[str]
    rows: list[dict]
    metadata: dict = field(default_factory=dict)
    samples: dict = field(default_factory=dict)

    def column(self, name: str, feasible_only: bool = True) -> np.ndarray:
        rows = [r for r in self.rows if r.get("feasible", True) or not feasible_only]
        return np.array([r[name] for r in rows], dtype=float)

    def to_csv(self, path) -> None:
        """Write the rows; blank cells mark values absent for infeasible rows."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([_fmt(r.get(c)) for c in self.columns])

    def to_json(self, path) -> None:
        payload = {"kind": self.kind, "columns": self.columns, "rows": self.rows,
                   "metadata": {k: v for k, v in self.metadata.items() if k != "wall_time_s"}}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return repr(round(v, 12))
    return str(v)


def _json_default(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not serializable: {type(v).__name__}")


def eta_key(delta: float) -> str:
    return f"eta_{delta:g}"


def hw_key(delta: float) -> str:
    return f"hw_{delta:g}"


# -- static study --------------------------------------------------------------

@dataclass
class Scenario:
    """Pre-perturbation operating point the attacker learned."""

    grid: GridCase
    load: np.ndarray
    baseline: DispatchSolution
    H_attacker: np.ndarray
    z_ref: np.ndarray


def static_scenario(grid: GridCase, cfg: EvalConfig, load=None, baseline=None) -> Scenario:
    load = grid.loads if load is None else np.asarray(load, dtype=float)
    if baseline is None:
        baseline = baseline_opf(grid, load, n_starts=cfg.n_starts, seed=cfg.seed)
    H = build_measurement_matrix(grid, baseline.x)
    return Scenario(grid, load, baseline, H, H @ baseline.theta)


def gamma_sweep(grid: GridCase, load, H_attacker, cfg: EvalConfig, baseline=None, z_ref=None) -> EvalReport:
    """Angle-constrained OPF and effectiveness for every angle in ``cfg.gammas``.

    Angles are solved from largest to smallest and each solution seeds the
    next (smaller) one, so the reported cost is nondecreasing in the angle.
    The same attack set and noise streams are used at every angle.
    """
    t0 = time.perf_counter()
    if not cfg.gammas:
        raise ValueError("empty gamma grid")
    load = grid.loads if load is None else np.asarray(load, dtype=float)
    if baseline is None:
        baseline = baseline_opf(grid, load, n_starts=cfg.n_starts, seed=cfg.seed)
    if z_ref is None:
        z_ref = H_attacker @ baseline.theta
    attacks = attack_matrix(H_attacker, z_ref, cfg)
    sim = DetectionSimulator(cfg)
    rows, pd_samples, warm = {}, {}, []
    for gamma in sorted(cfg.gammas, reverse=True):
        row = {"gamma_th": gamma}
        try:
            plan = mtd_opf(grid, load, H_attacker, gamma, baseline=baseline,
                           n_starts=cfg.n_starts, seed=cfg.seed, extra_starts=warm)
        except InfeasibleError as exc:
            log.info("gamma %.3f infeasible: %s", gamma, exc)
            row.update(feasible=False, gamma_achieved=exc.best_angle, cost=None, c_mtd=None)
            for d in cfg.deltas:
                row[eta_key(d)] = row[hw_key(d)] = None
            rows[gamma] = row
            continue
        warm = [plan.x_prime]
        pd = sim.detection_probabilities(sim.model(plan.H_prime), attacks)
        pd_samples[gamma] = pd
        row.update(feasible=True, gamma_achieved=plan.gamma_achieved,
                   cost=plan.dispatch.cost, c_mtd=plan.c_mtd)
        for d in cfg.deltas:
            est = effectiveness_from_pd(pd, d)
            row[eta_key(d)] = est.value
            row[hw_key(d)] = est.half_width
        rows[gamma] = row
    ordered = [rows[g] for g in sorted(rows)]
    cols = ["gamma_th", "feasible", "gamma_achieved", "cost", "c_mtd"]
    cols += [k for d in cfg.deltas for k in (eta_key(d), hw_key(d))]
    meta = _metadata("gamma_sweep", cfg, t0, baseline_cost=baseline.cost)
    return EvalReport("gamma_sweep", cols, ordered, meta, {"detection_probabilities": pd_samples})


def tradeoff_curve(grid: GridCase, load, H_attacker, cfg: EvalConfig, baseline=None, z_ref=None,
                   sweep: EvalReport | None = None) -> EvalReport:
    """Effectiveness paired with MTD cost along the angle grid (feasible rows only)."""
    t0 = time.perf_counter()
    if sweep is None:
        sweep = gamma_sweep(grid, load, H_attacker, cfg, baseline, z_ref)
    cols = ["gamma_th", "c_mtd"] + [eta_key(d) for d in cfg.deltas]
    rows = [{k: r[k] for k in cols} for r in sweep.rows if r["feasible"]]
    meta = _metadata("tradeoff", cfg, t0, baseline_cost=sweep.metadata.get("baseline_cost"))
    return EvalReport("tradeoff", cols, rows, meta)


def random_plans(grid: GridCase, x_center, n_plans: int, bound: float, seed: int) -> list[np.ndarray]:
    """Reactances uniform within ``+/- bound`` of ``x_center`` on D-FACTS branches,
    clipped to the D-FACTS limits."""
    idx = grid.dfacts_index
    plans = []
    for k in range(n_plans):
        x = np.array(x_center, dtype=float)
        u = stream(seed, 4, k).uniform(-bound, bound, size=len(idx))
        x[idx] = np.clip(x[idx] * (1.0 + u), grid.x_min[idx], grid.x_max[idx])
        plans.append(x)
    return plans


def random_perturbation_baseline(grid: GridCase, load, H_attacker, cfg: EvalConfig, n_plans: int = 500,
                                 bound: float = 0.02, baseline=None, z_ref=None,
                                 target_delta: float = 0.9, target_eta: float = 0.9) -> EvalReport:
    """Effectiveness of randomly drawn small perturbations around the optimal reactances."""
    t0 = time.perf_counter()
    if n_plans <= 0:
        raise ValueError("n_plans must be positive")
    if bound < 0:
        raise ValueError("bound must be nonnegative")
    load = grid.loads if load is None else np.asarray(load, dtype=float)
    if baseline is None:
        baseline = baseline_opf(grid, load, n_starts=cfg.n_starts, seed=cfg.seed)
    if z_ref is None:
        z_ref = H_attacker @ baseline.theta
    attacks = attack_matrix(H_attacker, z_ref, cfg)
    sim = DetectionSimulator(cfg)
    rows = []
    for k, x in enumerate(random_plans(grid, baseline.x, n_plans, bound, cfg.seed)):
        H = build_measurement_matrix(grid, x)
        pd = sim.detection_probabilities(sim.model(H), attacks)
        row = {"plan": k, "gamma": subspace_angle(H_attacker, H),
               "max_rel_dx": float(np.max(np.abs(x / baseline.x - 1.0)))}
        for d in cfg.deltas:
            row[eta_key(d)] = effectiveness_from_pd(pd, d).value
        rows.append(row)
    report = EvalReport("random_baseline", ["plan", "gamma", "max_rel_dx"] + [eta_key(d) for d in cfg.deltas],
                        rows, _metadata("random_baseline", cfg, t0, n_plans=n_plans, bound=bound))
    report.metadata["summary"] = random_baseline_summary(report, cfg, target_delta, target_eta)
    return report


def random_baseline_summary(report: EvalReport, cfg: EvalConfig, target_delta: float = 0.9,
                            target_eta: float = 0.9) -> list[dict]:
    """Per delta: fraction of plans meeting ``eta >= target_eta``, plus median and IQR."""
    out = []
    for d in cfg.deltas:
        eta = report.column(eta_key(d))
        q1, med, q3 = np.percentile(eta, [25, 50, 75])
        out.append({"delta": d, "fraction_meeting": float(np.mean(eta >= target_eta)),
                    "median": float(med), "iqr": float(q3 - q1),
                    "target": bool(d == target_delta)})
    return out


# -- daily study ---------------------------------------------------------------

ATTACKER_MODELS = ("previous_baseline", "previous_mtd")


def daily_simulation(grid: GridCase, trace: LoadTrace, cfg: EvalConfig, target_delta: float = 0.9,
                     target_eta: float = 0.9, attacker_model: str = "previous_baseline") -> EvalReport:
    """Hour-by-hour MTD with the cheapest angle threshold meeting the effectiveness target.

    The attacker's matrix at hour ``h`` is the previous hour's unperturbed
    OPF matrix (``previous_baseline``) or the previous hour's perturbed one
    (``previous_mtd``). Thresholds from ``cfg.gammas`` are tried from the
    largest down, each warm-started from the last plan, and the scan stops
    at the first threshold that misses the target; the last plan that met
    it is kept. If the largest threshold is unattainable, the largest angle
    found (less 1e-3) takes its place. Hours where no threshold meets the
    target are reported with ``feasible = 0``.
    """
    t0 = time.perf_counter()
    if attacker_model not in ATTACKER_MODELS:
        raise ValueError(f"attacker_model must be one of {ATTACKER_MODELS}")
    if len(trace) < 2:
        raise ValueError("trace needs at least two hours")
    sim = DetectionSimulator(cfg)
    baselines = daily_baselines(grid, trace, cfg)
    H_base = [build_measurement_matrix(grid, b.x) for b in baselines]
    rows = []
    prev_plan_x = None
    for h, total in enumerate(trace.loads):
        if h == 0:
            continue
        load = disaggregate_load(grid, total)
        base, H_now = baselines[h], H_base[h]
        if attacker_model == "previous_mtd" and prev_plan_x is not None:
            H_att = build_measurement_matrix(grid, prev_plan_x)
        else:
            H_att = H_base[h - 1]
        attacks = attack_matrix(H_att, H_now @ base.theta, cfg)
        best = _cheapest_effective_plan(grid, load, H_att, base, attacks, sim, cfg, target_delta, target_eta)
        row = {"hour": h, "timestamp": trace.timestamps[h], "load": total,
               "baseline_cost": base.cost,
               "gamma_t_tprime": subspace_angle(H_base[h - 1], H_now)}
        if best is None:
            row.update(feasible=False, gamma_th=None, c_mtd=None, eta=None,
                       gamma_tprime_mtd=None, gamma_t_mtd=None)
            prev_plan_x = None
        else:
            gamma, plan, est = best
            prev_plan_x = plan.x_prime
            row.update(feasible=True, gamma_th=gamma, c_mtd=plan.c_mtd, eta=est.value,
                       gamma_tprime_mtd=subspace_angle(H_now, plan.H_prime),
                       gamma_t_mtd=subspace_angle(H_att, plan.H_prime))
        rows.append(row)
    cols = ["hour", "timestamp", "load", "feasible", "gamma_th", "c_mtd", "eta", "baseline_cost",
            "gamma_t_tprime", "gamma_tprime_mtd", "gamma_t_mtd"]
    meta = _metadata("daily", cfg, t0, attacker_model=attacker_model, target_delta=target_delta,
                     target_eta=target_eta)
    return EvalReport("daily", cols, rows, meta)


def _cheapest_effective_plan(grid, load, H_att, base, attacks, sim, cfg, target_delta, target_eta):
    """Descending threshold scan; returns ``(gamma, plan, estimate)`` or None."""
    pending = sorted(cfg.gammas, reverse=True)
    best, warm, first = None, [], True
    while pending:
        gamma = pending.pop(0)
        try:
            plan = mtd_opf(grid, load, H_att, gamma, baseline=base, n_starts=cfg.n_starts,
                           seed=cfg.seed, extra_starts=warm)
        except InfeasibleError as exc:
            if first and exc.best_angle is not None and exc.best_angle - 1e-3 > (pending[0] if pending else 0.0):
                pending.insert(0, exc.best_angle - 1e-3)
            first = False
            continue
        first = False
        warm = [plan.x_prime]
        est = effectiveness_from_pd(sim.detection_probabilities(sim.model(plan.H_prime), attacks), target_delta)
        if est.value < target_eta:
            break
        best = (gamma, plan, est)
    return best


BASIN_RTOL = 1e-5


def daily_baselines(grid: GridCase, trace: LoadTrace, cfg: EvalConfig) -> list[DispatchSolution]:
    """Unperturbed OPF for every hour, solved outward from the peak hour.

    Each hour's search is seeded with its already-solved neighbour (the next
    hour before the peak, the previous hour after it), and equal-cost optima
    keep that seed. Lightly loaded hours, where many reactance settings are
    optimal, therefore inherit the setting of the adjacent congested hour
    instead of jumping to an arbitrary point of the optimal set. A final
    local pass restarts every hour from both neighbours and keeps a strictly
    cheaper result, so one unlucky multi-start draw cannot strand an hour in
    a worse basin than the hours around it.
    """
    loads = [disaggregate_load(grid, total) for total in trace.loads]
    peak = int(np.argmax(trace.loads))
    out: list[DispatchSolution | None] = [None] * len(loads)
    out[peak] = baseline_opf(grid, loads[peak], n_starts=cfg.n_starts, seed=cfg.seed)
    order = [(h, h + 1) for h in range(peak - 1, -1, -1)] + [(h, h - 1) for h in range(peak + 1, len(loads))]
    solved = {trace.loads[peak]: out[peak]}
    for h, neighbour in order:
        # repeated load levels reuse one solution so equal hours stay identical
        if trace.loads[h] not in solved:
            solved[trace.loads[h]] = baseline_opf(grid, loads[h], n_starts=cfg.n_starts, seed=cfg.seed,
                                                  extra_starts=[out[neighbour].x])
        out[h] = solved[trace.loads[h]]
    for _ in range(len(loads)):
        changed = False
        for h in range(len(loads)):
            current = solved[trace.loads[h]]
            seeds = [current.x] + [out[n].x for n in (h - 1, h + 1) if 0 <= n < len(loads)]
            cand = baseline_opf(grid, loads[h], n_starts=0, seed=cfg.seed, extra_starts=seeds)
            # polishing gains of order 1e-6 are not a different basin
            if cand.cost < current.cost * (1.0 - BASIN_RTOL):
                solved[trace.loads[h]] = cand
                changed = True
            out[h] = solved[trace.loads[h]]
        if not changed:
            break
    return out


def _metadata(kind: str, cfg: EvalConfig, t0: float, **extra) -> dict:
    meta = {"kind": kind, "seed": cfg.seed, "config": cfg.to_dict(), "config_digest": cfg.digest(),
            "wall_time_s": time.perf_counter() - t0}
    meta.update(extra)
    return meta

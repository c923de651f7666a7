"""Command-line entry point: ``gridmtd {calibrate,sweep,random-baseline,daily}``.

Exit status is 0 on success, 1 when the study produced no feasible result
and 2 for usage or input errors.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
import time
from dataclasses import dataclass, field, fields
from importlib import metadata as importlib_metadata
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .estimation import build_measurement_matrix
from .evaluation import (
    DetectionSimulator,
    EvalConfig,
    EvalReport,
    daily_simulation,
    false_positive_rate,
    gamma_sweep,
    random_perturbation_baseline,
    static_scenario,
    tradeoff_curve,
)
from .grid import BUNDLED_CASES, CaseFormatError, load_case, parse_case, parse_load_trace
from .opf import InfeasibleError

log = logging.getLogger("gridmtd")

EXIT_OK, EXIT_EMPTY, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad arguments or unreadable input; maps to exit status 2."""


# -- configuration --------------------------------------------------------------

_CONFIG_FIELDS = {f.name: f for f in fields(EvalConfig)}
_EXTRA_KEYS = {"n_plans", "bound", "target_delta", "target_eta", "attacker_model"}


def parse_float_list(text: str) -> tuple[float, ...]:
    """``"0,0.1,0.2"`` or ``"start:stop:step"`` (stop inclusive)."""
    text = text.strip()
    try:
        if ":" in text:
            start, stop, step = (float(p) for p in text.split(":"))
            if step <= 0 or stop < start:
                raise ValueError
            n = int(round((stop - start) / step)) + 1
            return tuple(round(start + k * step, 10) for k in range(n) if start + k * step <= stop + 1e-9)
        values = tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise UsageError(f"cannot parse number list {text!r}") from None
    if not values:
        raise UsageError("empty number list")
    return values


def _coerce(key: str, raw: str):
    if key in ("deltas", "gammas"):
        return parse_float_list(raw)
    if key == "attacker_model":
        return raw
    if key == "weighted":
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise UsageError(f"{key}: expected a boolean, got {raw!r}")
    typ = _CONFIG_FIELDS[key].type if key in _CONFIG_FIELDS else "float"
    try:
        if typ in (int, "int") or key.startswith("n_") or key == "seed":
            return int(raw)
        return float(raw)
    except ValueError:
        raise UsageError(f"{key}: cannot parse {raw!r}") from None


def parse_config(text: str, source: str = "<config>") -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{source}:{lineno}: expected key = value")
        key, raw = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONFIG_FIELDS and key not in _EXTRA_KEYS:
            raise UsageError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, raw)
    return out


def _read_text(path: str, what: str) -> str:
    p = Path(path)
    try:
        return p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise UsageError(f"{what} file not found: {p}") from None
    except OSError as exc:
        raise UsageError(f"cannot read {what} file {p}: {exc.strerror}") from None


# -- provenance -----------------------------------------------------------------

def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    seed: int
    config: dict
    config_digest: str
    case: str
    case_sha256: str
    trace_sha256: str | None = None
    outputs: dict[str, str] = field(default_factory=dict)
    status: str = "ok"
    wall_time_s: float = 0.0
    versions: dict[str, str] = field(default_factory=dict)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _versions() -> dict[str, str]:
    out = {"python": platform.python_version(), "gridmtd": __version__}
    for dist in ("numpy", "scipy", "scikit-learn"):
        try:
            out[dist] = importlib_metadata.version(dist)
        except importlib_metadata.PackageNotFoundError:
            pass
    return out


# -- argument parsing -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--case", default="case14",
                        help=f"bundled case ({', '.join(BUNDLED_CASES)}) or path to a case file")
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", default=".", help="output directory (created if missing)")
    common.add_argument("--alpha", type=float, help="bad-data detector false-positive rate")
    common.add_argument("--gamma-grid", help="angle thresholds, 'a,b,c' or 'start:stop:step'")
    common.add_argument("--n-attacks", type=int)
    common.add_argument("--n-noise", type=int)
    common.add_argument("--n-starts", type=int, help="restarts of the reactance search")
    common.add_argument("--rel-mag", type=float, help="attack size as a fraction of ||z||_1")
    common.add_argument("--noise-sigma", type=float, help="measurement noise std (MW)")
    common.add_argument("--trials", type=int, help="noise draws for threshold calibration")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="gridmtd", description="Moving-target defense studies on DC grid models.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("calibrate", parents=[common], help="calibrate the bad-data threshold")
    sub.add_parser("sweep", parents=[common], help="effectiveness and cost versus angle threshold")
    rb = sub.add_parser("random-baseline", parents=[common], help="effectiveness of random small perturbations")
    rb.add_argument("--n-plans", type=int)
    rb.add_argument("--bound", type=float, help="relative perturbation bound")
    daily = sub.add_parser("daily", parents=[common], help="hour-by-hour MTD over a load trace")
    daily.add_argument("--trace", help="timestamp,load_MW CSV (default: bundled trace)")
    daily.add_argument("--attacker-model", choices=["previous_baseline", "previous_mtd"])
    return parser


def resolve_settings(args: argparse.Namespace) -> tuple[EvalConfig, dict]:
    """Merge defaults, the config file and flags (flags win)."""
    settings = parse_config(_read_text(args.config, "config"), args.config) if args.config else {}
    flags = {
        "seed": args.seed, "alpha": args.alpha, "n_attacks": args.n_attacks, "n_noise": args.n_noise,
        "n_starts": args.n_starts, "n_calibration": args.trials, "rel_magnitude": args.rel_mag, "noise_sigma": args.noise_sigma,
        "gammas": parse_float_list(args.gamma_grid) if args.gamma_grid is not None else None,
        "n_plans": getattr(args, "n_plans", None), "bound": getattr(args, "bound", None),
        "attacker_model": getattr(args, "attacker_model", None),
    }
    settings.update({k: v for k, v in flags.items() if v is not None})
    extras = {k: settings.pop(k) for k in list(settings) if k in _EXTRA_KEYS}
    try:
        cfg = EvalConfig(**settings)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None
    return cfg, extras


def load_grid(case_arg: str):
    try:
        if case_arg in BUNDLED_CASES:
            text = resources.files("gridmtd.data").joinpath(f"{case_arg}.case").read_text(encoding="utf-8")
            return load_case(case_arg), text
        text = _read_text(case_arg, "case")
        return parse_case(text, Path(case_arg).stem), text
    except CaseFormatError as exc:
        raise UsageError(f"{case_arg}: {exc}") from None


# -- commands -------------------------------------------------------------------

def _write(report: EvalReport, out: Path, name: str, outputs: dict) -> None:
    path = out / name
    report.to_csv(path)
    outputs[name] = sha256_file(path)


def cmd_calibrate(grid, cfg, extras, out, outputs) -> int:
    H = build_measurement_matrix(grid)
    model = DetectionSimulator(cfg).model(H)
    fp = false_positive_rate(model, cfg)
    row = {"case": grid.name, "alpha": cfg.alpha, "tau": model.tau, "n_meas": model.n_meas,
           "rank": model.rank, "noise_sigma": cfg.noise_sigma, "n_calibration": cfg.n_calibration,
           "n_validation": fp.n, "fp_rate": fp.value, "fp_half_width": fp.half_width, "seed": cfg.seed}
    _write(EvalReport("calibration", list(row), [row]), out, "calibration.csv", outputs)
    print(f"tau = {model.tau:.6g}; validation false-positive rate {fp.value:.2e} "
          f"(+/- {fp.half_width:.1e}, alpha = {cfg.alpha:g})")
    return EXIT_OK


def cmd_sweep(grid, cfg, extras, out, outputs) -> int:
    sc = static_scenario(grid, cfg)
    sweep = gamma_sweep(grid, sc.load, sc.H_attacker, cfg, sc.baseline, sc.z_ref)
    _write(sweep, out, "effectiveness_vs_gamma.csv", outputs)
    trade = tradeoff_curve(grid, sc.load, sc.H_attacker, cfg, sweep=sweep)
    _write(trade, out, "tradeoff.csv", outputs)
    n_ok = sum(r["feasible"] for r in sweep.rows)
    print(f"{n_ok}/{len(sweep.rows)} angle thresholds feasible; baseline cost {sc.baseline.cost:.2f}")
    return EXIT_OK if n_ok else EXIT_EMPTY


def cmd_random_baseline(grid, cfg, extras, out, outputs) -> int:
    if int(extras.get("n_plans", 500)) <= 0:
        raise UsageError("n_plans must be positive")
    if float(extras.get("bound", 0.02)) < 0:
        raise UsageError("bound must be nonnegative")
    sc = static_scenario(grid, cfg)
    rep = random_perturbation_baseline(grid, sc.load, sc.H_attacker, cfg,
                                       n_plans=int(extras.get("n_plans", 500)),
                                       bound=float(extras.get("bound", 0.02)),
                                       baseline=sc.baseline, z_ref=sc.z_ref,
                                       target_delta=float(extras.get("target_delta", 0.9)),
                                       target_eta=float(extras.get("target_eta", 0.9)))
    _write(rep, out, "random_baseline.csv", outputs)
    summary = rep.metadata["summary"]
    _write(EvalReport("random_baseline_summary", list(summary[0]), summary), out,
           "random_baseline_summary.csv", outputs)
    for s in summary:
        print(f"delta {s['delta']:g}: {s['fraction_meeting']:.3f} of plans meet target, "
              f"median {s['median']:.3f}, IQR {s['iqr']:.3f}")
    return EXIT_OK


def cmd_daily(grid, cfg, extras, out, outputs, trace_arg) -> tuple[int, str]:
    if trace_arg:
        text = _read_text(trace_arg, "trace")
        try:
            trace = parse_load_trace(text)
        except CaseFormatError as exc:
            raise UsageError(f"{trace_arg}: {exc}") from None
    else:
        text = resources.files("gridmtd.data").joinpath("daily_load.csv").read_text(encoding="utf-8")
        trace = parse_load_trace(text)
    kwargs = {k: extras[k] for k in ("target_delta", "target_eta", "attacker_model") if k in extras}
    try:
        rep = daily_simulation(grid, trace, cfg, **kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _write(rep, out, "daily.csv", outputs)
    n_ok = sum(r["feasible"] for r in rep.rows)
    print(f"{n_ok}/{len(rep.rows)} hours met the effectiveness target")
    return (EXIT_OK if n_ok else EXIT_EMPTY), sha256_text(text)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        cfg, extras = resolve_settings(args)
        grid, case_text = load_grid(args.case)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        outputs: dict[str, str] = {}
        trace_digest = None
        with np.errstate(all="ignore"):
            if args.command == "calibrate":
                code = cmd_calibrate(grid, cfg, extras, out, outputs)
            elif args.command == "sweep":
                code = cmd_sweep(grid, cfg, extras, out, outputs)
            elif args.command == "random-baseline":
                code = cmd_random_baseline(grid, cfg, extras, out, outputs)
            else:
                code, trace_digest = cmd_daily(grid, cfg, extras, out, outputs, args.trace)
    except UsageError as exc:
        print(f"gridmtd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleError as exc:
        print(f"gridmtd: infeasible: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    manifest = RunManifest(
        command=args.command, argv=argv, seed=cfg.seed, config={**cfg.to_dict(), **extras}, config_digest=cfg.digest(),
        case=grid.name, case_sha256=sha256_text(case_text), trace_sha256=trace_digest, outputs=outputs,
        status="ok" if code == EXIT_OK else "empty", wall_time_s=round(time.perf_counter() - t0, 3),
        versions=_versions(),
    )
    manifest.write(out / f"manifest_{args.command}.json")
    return code


if __name__ == "__main__":
    sys.exit(main())

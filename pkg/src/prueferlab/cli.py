"""Command-line orchestration: manifests in, CSV + JSON reports out.

Subcommands: trajectory | phase-diagram | equidist | regimes.  Every
output embeds the manifest hash, seed, schema version, and the minimum
certified angle precision, and contains nothing execution-dependent
(no timestamps, no worker counts), so rerunning a manifest reproduces
the files byte for byte regardless of parallelism.

Exit codes: 0 success, 2 malformed manifest or invalid law parameters,
3 precision abort, 4 operation precondition violated.  Failures leave a
machine-readable error.json in the output directory.
"""

from __future__ import annotations

import argparse
import json
import math
import multiprocessing
import os
import sys
from dataclasses import replace

import numpy as np

from .angles import AngleReducer
from .equidist import (
    DEFAULT_H_LIST,
    RESONANCE_TOL,
    del_series_diagnostic,
    star_discrepancy,
    weyl_sum,
)
from .manifest import (
    ExperimentManifest,
    PreconditionError,
    RunRecord,
    build_manifest,
    load_manifest,
)
from .model import (
    AdmissibilityError,
    ConfigError,
    ConstantCoupling,
    PrecisionError,
    StretchedGaps,
)
from .pruefer import ergodic_constants, run_trajectory
from .spectral import (
    ZERO_MEASURE_CAVEAT,
    classify,
    last_simon_diagnostics,
    regime_classify,
    scaling_exponents,
)
from .transfer import block_norms

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PRECISION = 3
EXIT_PRECONDITION = 4


# ---------------------------------------------------------------------------
# deterministic serialization


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    x = float(v)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.17g" % x


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return obj


def _meta(man: ExperimentManifest, min_certified_bits) -> dict:
    return {
        "manifest_hash": man.manifest_hash,
        "seed": man.seed,
        "schema_version": man.schema_version,
        "min_certified_bits": (
            min_certified_bits if min_certified_bits is not None else "n/a"
        ),
    }


def _write_csv(path: str, meta: dict, header, rows):
    lines = [f"# {k}: {v}" for k, v in meta.items()]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_json(path: str, obj):
    with open(path, "w", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _certified_floor(config) -> int:
    """Guaranteed lower bound on every angle certificate in an ensemble."""
    reducer = AngleReducer.from_energy(config.energy, config.effective_precision_bits)
    largest = config.base_positions[-1] + config.disorder.half_width(config.depth)
    return reducer.certified_bits(largest)


# ---------------------------------------------------------------------------
# trajectory


def _expectation_bound(n: int, h: int, varphi: float) -> float:
    denom = abs(math.sin(h * varphi))
    if denom < RESONANCE_TOL:
        return math.inf
    return (1.0 + 1.0 / denom) / n


def cmd_trajectory(man: ExperimentManifest, out: str) -> RunRecord:
    traj = run_trajectory(man.config)
    n = len(traj)

    rows = (
        (k + 1, traj.theta[k], traj.log_r2[k], traj.certified_bits[k])
        for k in range(n)
    )
    meta = _meta(man, traj.min_certified_bits)
    _write_csv(
        os.path.join(out, "trajectory.csv"),
        meta,
        ("k", "theta", "log_r2", "certified_bits"),
        rows,
    )

    coupling = man.config.coupling
    ergodic = None
    total_variation = 0.0
    if isinstance(coupling, ConstantCoupling):
        erg = ergodic_constants(coupling.p, traj.varphi)
        total_variation = erg.total_variation
        ergodic = {
            "growth_rate": erg.growth_rate,
            "log_integral": erg.log_integral,
            "total_variation": erg.total_variation,
        }
    disc = star_discrepancy(traj.theta, total_variation)

    report = dict(meta)
    report.update(
        {
            "discrepancy": {
                "n": disc.n,
                "d_star": disc.d_star,
                "koksma_c_n": disc.koksma_c_n,
            },
            "weyl": [
                {
                    "h": h,
                    "n": n,
                    "s_h_abs2": abs(weyl_sum(traj.theta, h)) ** 2,
                    "expectation_bound": _expectation_bound(n, h, traj.varphi),
                }
                for h in DEFAULT_H_LIST
            ],
            "growth": {
                "per_step": traj.growth_per_step,
                "mean_kick": traj.mean_kick,
            },
        }
    )
    if ergodic is not None:
        report["ergodic"] = ergodic
    _write_json(os.path.join(out, "trajectory_report.json"), report)

    return RunRecord(
        manifest_hash=man.manifest_hash,
        seed=man.seed,
        command="trajectory",
        files=("trajectory.csv", "trajectory_report.json"),
        min_certified_bits=traj.min_certified_bits,
    )


# ---------------------------------------------------------------------------
# phase diagram


def _phase_point(task):
    lam, p, beta = task
    if abs(lam) == 2.0:
        return (beta, p, lam, "Excluded", None, "BandEdge", None, None, None)
    verdict = classify(lam, beta, p=p)
    diag = verdict.diagnostics
    return (
        beta,
        p,
        lam,
        verdict.phase,
        verdict.dimension,
        verdict.reason,
        diag.get("i1_value"),
        diag.get("beta_over_r"),
        diag.get("forms_agree"),
    )


def cmd_phase_diagram(man: ExperimentManifest, out: str) -> RunRecord:
    lambdas, ps, betas = man.phase_grid()
    tasks = [
        (lam, p, beta)
        for beta in sorted(betas)
        for p in sorted(ps)
        for lam in sorted(lambdas)
    ]
    if man.workers > 1 and len(tasks) > 1:
        chunk = max(1, math.ceil(len(tasks) / (man.workers * 8)))
        with multiprocessing.Pool(man.workers) as pool:
            results = pool.map(_phase_point, tasks, chunksize=chunk)
    else:
        results = [_phase_point(t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[1], r[2]))

    meta = _meta(man, None)
    _write_csv(
        os.path.join(out, "phase_diagram.csv"),
        meta,
        ("lambda", "p", "beta", "phase", "dimension", "i1_value", "beta_over_r"),
        ((r[2], r[1], r[0], r[3], r[4], r[6], r[7]) for r in results),
    )

    counts = {}
    for r in results:
        counts[r[3]] = counts.get(r[3], 0) + 1
    report = dict(meta)
    report.update(
        {
            "caveat": ZERO_MEASURE_CAVEAT,
            "counts": counts,
            "rows": len(results),
            "forms_agree_all": all(r[8] for r in results if r[8] is not None),
            "excluded": [
                {"lambda": r[2], "p": r[1], "beta": r[0], "reason": r[5]}
                for r in results
                if r[3] == "Excluded"
            ],
        }
    )
    _write_json(os.path.join(out, "phase_report.json"), report)

    return RunRecord(
        manifest_hash=man.manifest_hash,
        seed=man.seed,
        command="phase-diagram",
        files=("phase_diagram.csv", "phase_report.json"),
        min_certified_bits=None,
    )


# ---------------------------------------------------------------------------
# equidistribution


def cmd_equidist(man: ExperimentManifest, out: str) -> RunRecord:
    ensemble, h_list, n_list, control = man.equidist_params()
    if ensemble < 16:
        raise PreconditionError(
            f"ensemble_size must be >= 16 for stable error bars, got {ensemble}; "
            "raise equidist.ensemble_size"
        )

    sections = [("primary", man.config)]
    if control is not None:
        sections.append(("rational_control", replace(man.config, energy=control)))

    csv_rows = []
    report_sections = {}
    floor = None
    for name, config in sections:
        diags = del_series_diagnostic(config, ensemble, h_list, n_list)
        cert = _certified_floor(config)
        floor = cert if floor is None else min(floor, cert)
        per_h = {}
        for h in h_list:
            diag = diags[h]
            for rep in diag.reports:
                csv_rows.append(
                    (name, h, rep.n, rep.i_h, rep.standard_error, rep.bound)
                )
            per_h[h] = {
                "verdict": diag.verdict,
                "partial_sum": diag.partial_sum,
                "resonant": diag.resonant,
                "rows": [
                    {
                        "n": rep.n,
                        "i_h": rep.i_h,
                        "standard_error": rep.standard_error,
                        "bound": rep.bound,
                    }
                    for rep in diag.reports
                ],
            }
        report_sections[name] = {
            "lambda": config.energy.lam,
            "rationality": config.energy.rationality.kind,
            "harmonics": per_h,
        }

    meta = _meta(man, floor)
    _write_csv(
        os.path.join(out, "equidist.csv"),
        meta,
        ("energy", "h", "n", "i_h", "standard_error", "bound"),
        csv_rows,
    )
    report = dict(meta)
    report.update({"ensemble_size": ensemble, "sections": report_sections})
    _write_json(os.path.join(out, "equidist_report.json"), report)

    return RunRecord(
        manifest_hash=man.manifest_hash,
        seed=man.seed,
        command="equidist",
        files=("equidist.csv", "equidist_report.json"),
        min_certified_bits=floor,
    )


# ---------------------------------------------------------------------------
# regimes


_DEFINITE_REGIMES = {"pp-everywhere", "sc-dimension-1", "sc-dimension-0", "split-band"}


def cmd_regimes(man: ExperimentManifest, out: str) -> RunRecord:
    gammas, c, measured_depth = man.regime_params()
    coupling = man.config.coupling

    rows = []
    min_cert = None
    for gamma in sorted(gammas):
        sparsity = StretchedGaps(c=c, gamma=gamma)
        verdict = regime_classify(sparsity, coupling)
        row = {
            "gamma": gamma,
            "regime": verdict.regime,
            "note": verdict.note,
            "sc_below": verdict.sc_below,
            "pp_above": verdict.pp_above,
            "bracketing": verdict.bracketing,
            "kappa_T": None,
            "alpha_continuous_max": None,
            "npp_final_ratio": None,
            "dnor_table": None,
        }
        if verdict.regime in _DEFINITE_REGIMES:
            cfg = replace(man.config, sparsity=sparsity, depth=measured_depth)
            norms = block_norms(
                cfg.realization(0),
                cfg.energy,
                cfg.coupling,
                precision_bits=cfg.effective_precision_bits,
            )
            min_cert = (
                norms.min_certified_bits
                if min_cert is None
                else min(min_cert, norms.min_certified_bits)
            )
            diag = last_simon_diagnostics(norms)
            ratios = diag.npp_term_ratios()
            if len(ratios):
                row["npp_final_ratio"] = float(ratios[-1])
            try:
                scaling = scaling_exponents(diag)
            except ValueError as exc:
                row["note"] = (row["note"] + "; " if row["note"] else "") + str(exc)
            else:
                row["kappa_T"] = scaling.kappa_T
                row["alpha_continuous_max"] = scaling.alpha_continuous_max
                row["dnor_table"] = [
                    {
                        "alpha": alpha,
                        "residual_slope": scaling.kappa_T - (2.0 - alpha),
                        "bounded": scaling.kappa_T - (2.0 - alpha)
                        <= scaling.slope_tol,
                    }
                    for alpha in scaling.alpha_grid
                ]
        rows.append(row)

    meta = _meta(man, min_cert)
    _write_csv(
        os.path.join(out, "regimes.csv"),
        meta,
        (
            "gamma",
            "regime",
            "sc_below",
            "pp_above",
            "kappa_T",
            "alpha_continuous_max",
            "npp_final_ratio",
        ),
        (
            (
                r["gamma"],
                r["regime"],
                r["sc_below"],
                r["pp_above"],
                r["kappa_T"],
                r["alpha_continuous_max"],
                r["npp_final_ratio"],
            )
            for r in rows
        ),
    )
    report = dict(meta)
    report.update({"stretching_constant": c, "measured_depth": measured_depth, "rows": rows})
    _write_json(os.path.join(out, "regimes_report.json"), report)

    return RunRecord(
        manifest_hash=man.manifest_hash,
        seed=man.seed,
        command="regimes",
        files=("regimes.csv", "regimes_report.json"),
        min_certified_bits=min_cert,
    )


# ---------------------------------------------------------------------------
# entry point


_COMMANDS = {
    "trajectory": cmd_trajectory,
    "phase-diagram": cmd_phase_diagram,
    "equidist": cmd_equidist,
    "regimes": cmd_regimes,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prueferlab",
        description="Deterministic experiments on sparse off-diagonal Jacobi matrices",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("trajectory", "single-point angle/radius trajectory + equidistribution report"),
        ("phase-diagram", "phase classification over a (lambda, p, beta) grid"),
        ("equidist", "Monte Carlo Weyl-sum second moments against the analytic bound"),
        ("regimes", "whole-band regime table over a gamma sweep"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--manifest", required=True, help="TOML manifest path")
        cmd.add_argument("--out", help="output directory (overrides manifest out_dir)")
        cmd.add_argument("--workers", type=int, help="worker processes (overrides manifest)")
        cmd.add_argument("--seed", type=int, help="RNG seed (overrides manifest)")
    return parser


def _fail(code: int, exc: Exception, out_dir) -> int:
    payload = {
        "error": type(exc).__name__,
        "message": str(exc),
        "exit_code": code,
    }
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    if out_dir:
        try:
            os.makedirs(out_dir, exist_ok=True)
            _write_json(os.path.join(out_dir, "error.json"), payload)
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    out_dir = args.out
    try:
        data = load_manifest(args.manifest)
        if out_dir is None and isinstance(data, dict):
            raw_out = data.get("out_dir")
            out_dir = raw_out if isinstance(raw_out, str) else None
        man = build_manifest(data, args.seed, args.workers, args.out)
        if man.out_dir is None:
            raise ConfigError("no output directory: set out_dir in the manifest or pass --out")
        out_dir = man.out_dir
        os.makedirs(out_dir, exist_ok=True)
        stale = os.path.join(out_dir, "error.json")
        if os.path.exists(stale):
            os.remove(stale)
        record = _COMMANDS[args.command](man, out_dir)
        _write_json(os.path.join(out_dir, "run.json"), record.to_json_dict())
        return EXIT_OK
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc, out_dir)
    except PrecisionError as exc:
        return _fail(EXIT_PRECISION, exc, out_dir)
    except (PreconditionError, AdmissibilityError) as exc:
        return _fail(EXIT_PRECONDITION, exc, out_dir)


if __name__ == "__main__":
    sys.exit(main())

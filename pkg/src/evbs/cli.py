"""Command-line interface: fit, influence, residuals, simulate, report.

Exit codes: 0 success, 1 analysis error, 2 usage error. The environment
variable EVBS_SEED overrides any configured seed.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .dataio import LoadError, ingest_csv, parse_scenario_config
from .influence import (
    CaseWeights,
    CovariatePerturbation,
    ResponsePerturbation,
    _hessian_at_fit,
    delta_matrix,
    influence_report,
)
from .pipeline import AnalysisConfig, PipelineError, run_pipeline
from .regression import fit_mle
from .residuals import envelope, ks_normal_test, quantile_residuals, shapiro_wilk
from .kernels import RngState
from .simulation import ScenarioConfig, format_csv, format_text, run_scenario


def _seed_override(seed: int) -> int:
    env = os.environ.get("EVBS_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise SystemExit(f"EVBS_SEED must be an integer, got {env!r}")
    return seed


def _add_data_args(sp):
    sp.add_argument("--input", required=True, help="CSV file with a header row")
    sp.add_argument("--response-col", default="gust_ms")
    sp.add_argument("--covariate", dest="covariates", action="append",
                    default=None, help="covariate column (repeatable)")
    sp.add_argument("--date-col", default="date")
    sp.add_argument("--log-response", action="store_true",
                    help="model the log of the response")


def _load(args):
    covs = tuple(args.covariates or ["pressure_mb"])
    return ingest_csv(args.input, response_col=args.response_col,
                      covariate_cols=covs, date_col=args.date_col,
                      log_response=args.log_response)


def _print_fit(fit):
    names = [*fit.labels, "alpha"] + ([] if fit.gamma_zero_mode else ["gamma"])
    est = fit.theta_vector()
    p = len(fit.labels)
    print(f"{'parameter':<14}{'estimate':>12}{'std error':>12}{'p-value':>12}")
    for j, name in enumerate(names):
        se = f"{fit.std_errors[j]:.4f}" if fit.std_errors is not None else "-"
        pv = (f"{fit.p_values[j]:.4g}" if (fit.p_values is not None and j < p)
              else "-")
        print(f"{name:<14}{est[j]:>12.4f}{se:>12}{pv:>12}")
    print(f"log-likelihood {fit.loglik:.4f}  converged {fit.converged}  "
          f"iterations {fit.iterations}"
          + ("  [gamma = 0 submodel]" if fit.gamma_zero_mode else ""))


def cmd_fit(args) -> int:
    data, _, issues = _load(args)
    for msg in issues:
        print(f"note: rejected {msg}", file=sys.stderr)
    fit = fit_mle(data)
    _print_fit(fit)
    if fit.gamma_zero_fit is not None:
        print("\n|gamma| < 1e-4; gamma = 0 submodel refit:")
        _print_fit(fit.gamma_zero_fit)
    return 0 if fit.converged else 1


def cmd_influence(args) -> int:
    data, _, _ = _load(args)
    fit = fit_mle(data)
    if args.scheme == "case-weights":
        scheme = CaseWeights()
    elif args.scheme == "response":
        scheme = ResponsePerturbation(args.scale)
    else:
        scheme = CovariatePerturbation(args.column, args.scale)
    delta = delta_matrix(scheme, fit, data)
    rep = influence_report(delta, _hessian_at_fit(fit, data), args.q)
    lam = rep.normalized_eigenvalues
    shown = ", ".join(f"{v:.5f}" for v in lam[: min(6, len(lam))])
    print(f"scheme {args.scheme}: top normalized eigenvalues {shown}")
    print(f"q = {rep.q}, {rep.k} q-influential direction(s), "
          f"benchmark b(q) = {rep.benchmark:.5f}")
    print("flagged observations:", ", ".join(f"#{j}" for j in rep.flagged) or "none")
    return 0


def cmd_residuals(args) -> int:
    data, _, _ = _load(args)
    fit = fit_mle(data)
    res = quantile_residuals(fit, data)
    ks_stat, ks_p = ks_normal_test(res)
    print(f"KS vs standard normal: statistic {ks_stat:.4f}, p-value {ks_p:.4f}")
    if 8 <= len(res) <= 5000:
        sw_stat, sw_p = shapiro_wilk(res)
        print(f"Shapiro-Wilk: W {sw_stat:.4f}, p-value {sw_p:.4f}")
    if args.envelope:
        bands = envelope(fit, data, args.envelope_sims, 0.95,
                         RngState(_seed_override(args.seed)))
        inside = np.sum((res.sorted >= bands.lower) & (res.sorted <= bands.upper))
        print(f"envelope ({args.envelope_sims} sims): "
              f"{inside}/{len(res)} order statistics inside 95% bands")
    return 0


def cmd_simulate(args) -> int:
    if args.config:
        kv = parse_scenario_config(args.config)
        cfg = ScenarioConfig.preset(
            scenario=int(kv.get("scenario", args.scenario or 1)),
            n=int(kv.get("n", args.n)),
            replicas=int(kv.get("replicas", args.replicas)),
            seed=_seed_override(int(kv.get("seed", args.seed))),
            gamma_grid=tuple(float(g) for g in kv["gamma_grid"].split())
            if "gamma_grid" in kv else None,
        )
    else:
        cfg = ScenarioConfig.preset(
            scenario=args.scenario, n=args.n, replicas=args.replicas,
            seed=_seed_override(args.seed),
            gamma_grid=tuple(args.gamma) if args.gamma else None,
        )
    result = run_scenario(cfg)
    if args.out:
        Path(args.out).write_text(format_csv(result), encoding="utf-8")
        print(format_text(result))
    else:
        print(format_csv(result), end="")
    return 0


def cmd_report(args) -> int:
    covs = tuple(args.covariates or ["pressure_mb"])
    config = AnalysisConfig(
        input_path=args.input,
        output_dir=args.outdir,
        response_col=args.response_col,
        covariate_cols=covs,
        date_col=args.date_col,
        log_response=args.log_response,
        q=args.q,
        envelope_sims=args.envelope_sims,
        seed=_seed_override(args.seed),
    )
    bundle = run_pipeline(config)
    fit = bundle.fit
    _print_fit(fit)
    rep = bundle.influence.get("case-weights")
    if rep is not None:
        print(f"\ncase-weight influence: q = {rep.q}, flagged "
              + (", ".join(f"#{j}" for j in rep.flagged) or "none"))
    for d in bundle.deletions:
        rates = ", ".join(f"{n} {v:+.2f}%" for n, v in
                          zip(d.parameter_names, d.rate_of_change))
        print(f"drop #{d.index}: {rates}")
    print(f"\nartifacts written to {args.outdir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="evbs",
        description="Extreme-value Birnbaum-Saunders regression with local "
                    "influence diagnostics",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("fit", help="maximum-likelihood fit")
    _add_data_args(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("influence", help="local influence analysis")
    _add_data_args(sp)
    sp.add_argument("--scheme", choices=["case-weights", "response", "covariate"],
                    default="case-weights")
    sp.add_argument("--column", type=int, default=1,
                    help="design column for the covariate scheme")
    sp.add_argument("--scale", type=float, default=None,
                    help="perturbation scale factor (default: sample sd)")
    sp.add_argument("--q", type=int, default=None)
    sp.set_defaults(func=cmd_influence)

    sp = sub.add_parser("residuals", help="quantile-residual diagnostics")
    _add_data_args(sp)
    sp.add_argument("--envelope", action="store_true")
    sp.add_argument("--envelope-sims", type=int, default=100)
    sp.add_argument("--seed", type=int, default=20240)
    sp.set_defaults(func=cmd_residuals)

    sp = sub.add_parser("simulate", help="Monte Carlo estimator-quality study")
    sp.add_argument("--scenario", type=int, choices=[1, 2, 3], default=1)
    sp.add_argument("--n", type=int, default=120)
    sp.add_argument("--replicas", type=int, default=500)
    sp.add_argument("--gamma", type=float, action="append", default=None,
                    help="tail-index grid value (repeatable)")
    sp.add_argument("--seed", type=int, default=1234)
    sp.add_argument("--config", default=None, help="key=value scenario file")
    sp.add_argument("--out", default=None, help="write CSV here instead of stdout")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("report", help="full analysis pipeline with artifacts")
    _add_data_args(sp)
    sp.add_argument("--outdir", required=True)
    sp.add_argument("--q", type=int, default=None)
    sp.add_argument("--envelope-sims", type=int, default=100)
    sp.add_argument("--seed", type=int, default=20240)
    sp.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (LoadError, PipelineError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

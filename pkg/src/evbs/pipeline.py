"""End-to-end analysis pipeline: ingest, fit, residual checks, influence
diagnostics, deletion impacts, and report/plot emission.

All artifacts are deterministic given the config seed: the JSON report uses
the stable serializer and the SVG charts embed no volatile state. Any stage
failure removes the artifacts written so far and raises
:class:`PipelineError` naming the stage.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import ndtri

from . import svgplot
from .dataio import Record, acf, descriptive_stats, dumps_stable, ingest_csv
from .influence import (
    CaseWeights,
    CovariatePerturbation,
    DeletionImpact,
    InfluenceReport,
    ResponsePerturbation,
    _hessian_at_fit,
    delta_matrix,
    deletion_impact,
    influence_report,
)
from .kernels import RngState
from .regression import FitResult, RegressionData, fit_mle, predict_response
from .residuals import EnvelopeBands, ResidualSet, envelope, ks_normal_test, \
    quantile_residuals, shapiro_wilk


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"pipeline stage '{stage}' failed: {cause}")


@dataclass
class AnalysisConfig:
    input_path: str
    output_dir: str
    response_col: str = "gust_ms"
    covariate_cols: Tuple[str, ...] = ("pressure_mb",)
    date_col: Optional[str] = "date"
    log_response: bool = True
    schemes: Tuple[str, ...] = ("case-weights", "response", "covariate")
    covariate_scheme_col: int = 1     # design column for the covariate scheme
    q: Optional[int] = None           # None: largest q with >= 1 influential dir
    deletion: Union[str, Sequence[int]] = "flagged"
    envelope_sims: int = 100
    envelope_level: float = 0.95
    acf_max_lag: int = 40
    seed: int = 20240

    def scheme_objects(self):
        out = []
        for name in self.schemes:
            if name == "case-weights":
                out.append(("case-weights", CaseWeights()))
            elif name == "response":
                out.append(("response", ResponsePerturbation()))
            elif name == "covariate":
                out.append(("covariate", CovariatePerturbation(self.covariate_scheme_col)))
            else:
                raise ValueError(f"unknown scheme name: {name!r}")
        return out


@dataclass
class AnalysisBundle:
    data: RegressionData
    records: List[Record]
    issues: List[str]
    fit: FitResult
    residuals: ResidualSet
    ks: Tuple[float, float]
    sw: Optional[Tuple[float, float]]
    bands: EnvelopeBands
    influence: Dict[str, InfluenceReport]
    deletions: List[DeletionImpact]
    report: dict


def _fit_section(fit: FitResult) -> dict:
    sec = {
        "coefficients": fit.theta_hat.beta,
        "alpha": fit.theta_hat.alpha,
        "gamma": None if fit.gamma_zero_mode else fit.theta_hat.gamma,
        "loglik": fit.loglik,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "gamma_zero_mode": fit.gamma_zero_mode,
        "std_errors": fit.std_errors,
        "wald_z": fit.wald_z,
        "p_values": fit.p_values,
        "labels": list(fit.labels),
    }
    return sec


def _influence_section(rep: InfluenceReport) -> dict:
    return {
        "normalized_eigenvalues": rep.normalized_eigenvalues,
        "q": rep.q,
        "k": rep.k,
        "benchmark": rep.benchmark,
        "contributions": rep.contributions,
        "flagged": list(rep.flagged),
    }


def run_pipeline(config: AnalysisConfig) -> AnalysisBundle:
    outdir = Path(config.output_dir)
    created: List[Path] = []

    def emit(relpath: str, text: str) -> Path:
        p = outdir / relpath
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
        created.append(p)
        return p

    stage = "ingest"
    try:
        data, records, issues = ingest_csv(
            config.input_path,
            response_col=config.response_col,
            covariate_cols=config.covariate_cols,
            date_col=config.date_col,
            log_response=config.log_response,
        )

        stage = "descriptive"
        raw = np.array([r.response for r in records])
        desc = descriptive_stats(raw)
        acf_vals, acf_band = acf(raw, min(config.acf_max_lag, (len(raw) - 1) // 2))

        stage = "fit"
        fit = fit_mle(data)
        if not fit.converged:
            raise RuntimeError("maximum-likelihood fit did not converge")

        stage = "residuals"
        res = quantile_residuals(fit, data)
        ks = ks_normal_test(res)
        sw = shapiro_wilk(res) if 8 <= len(res) <= 5000 else None
        bands = envelope(fit, data, config.envelope_sims, config.envelope_level,
                         RngState(config.seed))

        stage = "influence"
        hess = _hessian_at_fit(fit, data)
        reports: Dict[str, InfluenceReport] = {}
        for name, scheme in config.scheme_objects():
            delta = delta_matrix(scheme, fit, data)
            reports[name] = influence_report(delta, hess, config.q)

        stage = "deletion"
        if config.deletion == "flagged":
            base = reports.get("case-weights") or next(iter(reports.values()))
            indices = list(base.flagged)
        else:
            indices = [int(i) for i in config.deletion]
        deletions = [deletion_impact(data, fit, i) for i in indices]

        stage = "report"
        report = {
            "n": data.n,
            "seed": config.seed,
            "input": str(config.input_path),
            "rejected_rows": issues,
            "descriptive": {
                "n": desc.n, "min": desc.minimum, "median": desc.median,
                "mean": desc.mean, "max": desc.maximum, "sd": desc.sd,
                "skewness": desc.skewness, "kurtosis": desc.kurtosis,
            },
            "fit": _fit_section(fit),
            "residual_tests": {
                "ks_statistic": ks[0], "ks_p_value": ks[1],
                "shapiro_wilk_statistic": None if sw is None else sw[0],
                "shapiro_wilk_p_value": None if sw is None else sw[1],
                "cdf_clamped": res.clamped,
            },
            "influence": {name: _influence_section(rep)
                          for name, rep in reports.items()},
            "deletion": [
                {
                    "observation": d.index,
                    "estimates": d.refit.theta_vector(),
                    "rate_of_change_percent": d.rate_of_change,
                    "p_values": d.refit.p_values,
                }
                for d in deletions
            ],
        }
        emit("report.json", dumps_stable(report))

        stage = "tables"
        emit("tables/descriptive.csv", _descriptive_csv(desc))
        emit("tables/fit.csv", _fit_csv(fit))
        for name, rep in reports.items():
            emit(f"tables/influence_{name}.csv", _influence_csv(rep))
        if deletions:
            emit("tables/deletion.csv", _deletion_csv(deletions))

        stage = "plots"
        plots = outdir / "plots"
        plots.mkdir(parents=True, exist_ok=True)

        xcov = data.X[:, 1] if data.p > 1 else np.arange(1, data.n + 1)
        grid = np.linspace(float(xcov.min()), float(xcov.max()), 200)
        curve = [predict_response(fit, np.array([1.0, g] + [0.0] * (data.p - 2)))
                 for g in grid] if data.p > 1 else None
        highlight = list(reports.get("case-weights", next(iter(reports.values()))).flagged)
        p = plots / "fitted_curve.svg"
        svgplot.scatter_with_curve(
            p, xcov, raw, grid if curve else None, curve,
            title="response vs covariate with fitted curve",
            xlabel=data.labels[1] if data.p > 1 else "index",
            ylabel=config.response_col, highlight=highlight)
        created.append(p)

        base_rep = reports.get("case-weights", next(iter(reports.values())))
        p = plots / "eigenvalues.svg"
        svgplot.index_plot(p, base_rep.normalized_eigenvalues,
                           title="normalized curvature eigenvalues",
                           ylabel="normalized eigenvalue", stems=True)
        created.append(p)

        p = plots / "contributions.svg"
        svgplot.index_plot(p, base_rep.contributions, hline=base_rep.benchmark,
                           title=f"aggregate contributions, q={base_rep.q}",
                           ylabel="aggregate contribution",
                           highlight=highlight, stems=True)
        created.append(p)

        srt = res.sorted
        theo = ndtri((np.arange(1, data.n + 1)) / (data.n + 1.0))
        p = plots / "qq_envelope.svg"
        svgplot.qq_envelope_plot(p, theo, srt, bands.lower, bands.median,
                                 bands.upper, title="quantile residuals with envelope")
        created.append(p)

        p = plots / "residual_index.svg"
        svgplot.index_plot(p, res.r, hline=0.0, title="quantile residuals",
                           ylabel="residual", highlight=highlight)
        created.append(p)

        p = plots / "acf.svg"
        svgplot.acf_plot(p, acf_vals, acf_band, title="response autocorrelation")
        created.append(p)

    except Exception as exc:
        for path in created:
            try:
                path.unlink()
            except OSError:
                pass
        raise PipelineError(stage, exc) from exc

    return AnalysisBundle(
        data=data, records=records, issues=issues, fit=fit, residuals=res,
        ks=ks, sw=sw, bands=bands, influence=reports, deletions=deletions,
        report=report,
    )


def _descriptive_csv(d) -> str:
    head = "n,min,median,mean,max,sd,skewness,kurtosis"
    vals = [d.n, d.minimum, d.median, d.mean, d.maximum, d.sd,
            d.skewness, d.kurtosis]
    row = ",".join("" if v is None else (str(v) if isinstance(v, int) else f"{v:.17g}")
                   for v in vals)
    return f"{head}\n{row}\n"


def _fit_csv(fit: FitResult) -> str:
    lines = ["parameter,estimate,std_error,wald_z,p_value"]
    names = [*fit.labels, "alpha"] + ([] if fit.gamma_zero_mode else ["gamma"])
    est = fit.theta_vector()
    p = len(fit.labels)
    for j, name in enumerate(names):
        se = "" if fit.std_errors is None else f"{fit.std_errors[j]:.17g}"
        z = f"{fit.wald_z[j]:.17g}" if (fit.wald_z is not None and j < p) else ""
        pv = f"{fit.p_values[j]:.17g}" if (fit.p_values is not None and j < p) else ""
        lines.append(f"{name},{est[j]:.17g},{se},{z},{pv}")
    return "\n".join(lines) + "\n"


def _influence_csv(rep: InfluenceReport) -> str:
    lines = ["observation,contribution,flagged"]
    flagged = set(rep.flagged)
    for j, c in enumerate(rep.contributions, start=1):
        lines.append(f"{j},{c:.17g},{int(j in flagged)}")
    lines.append(f"# q={rep.q} k={rep.k} benchmark={rep.benchmark:.17g}")
    return "\n".join(lines) + "\n"


def _deletion_csv(deletions: List[DeletionImpact]) -> str:
    names = deletions[0].parameter_names
    head = "observation," + ",".join(
        [f"est_{n}" for n in names] + [f"rate_{n}_pct" for n in names])
    lines = [head]
    for d in deletions:
        est = d.refit.theta_vector()
        row = [str(d.index)] + [f"{v:.17g}" for v in est] + \
              [f"{v:.17g}" for v in d.rate_of_change]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"

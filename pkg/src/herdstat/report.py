"""Report formatting: fit tables, JSON payloads, and run summaries.

Text tables and JSON reports carry the same numbers; only formatting
differs. Coefficients and t-statistics print to 3 decimals, AIC to 1.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

from herdstat.markov import MarkovSwitchingRegression, RegimeVerdict, ms_stars
from herdstat.regression import FitResult

DISPLAY_NAMES = {
    "const": "Intercept",
    "abs_rm": "|Rm|",
    "rm_sq": "Rm^2",
    "down_abs_rm": "D*|Rm|",
    "up_abs_rm": "(1-D)*|Rm|",
    "down_rm_sq": "D*Rm^2",
    "up_rm_sq": "(1-D)*Rm^2",
    "d_lower": "D_lower",
    "d_upper": "D_upper",
}


def display_name(column: str) -> str:
    if column.startswith("csad_lag"):
        return f"CSAD(t-{column.removeprefix('csad_lag')})"
    return DISPLAY_NAMES.get(column, column)


def _fmt(x: float, digits: int = 3) -> str:
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return "NA"
    return f"{x:.{digits}f}"


def static_fit_report(fit: FitResult, model: str, aggregator: str) -> dict:
    payload = fit.to_dict()
    payload["model"] = model
    payload["aggregator"] = aggregator
    return payload


def static_fit_table(fit: FitResult, title: str) -> str:
    width = max(len(display_name(c)) for c in fit.column_names)
    lines = [title, "=" * (width + 26)]
    lines.append(f"{'':<{width}}  {'Coef.':>12} {'t':>10}")
    lines.append("-" * (width + 26))
    for name, c, t, star in zip(fit.column_names, fit.coef, fit.t_stats, fit.stars):
        lines.append(f"{display_name(name):<{width}}  {_fmt(c) + star:>12} {_fmt(t):>10}")
    lines.append("-" * (width + 26))
    lines.append(f"{'R^2':<{width}}  {_fmt(fit.r_squared, 2):>12}")
    lines.append(f"{'AIC':<{width}}  {_fmt(fit.aic, 1):>12}")
    lines.append(f"{'Obs.':<{width}}  {fit.nobs:>12}")
    lines.append(f"{'NW bandwidth':<{width}}  {fit.bandwidth:>12}")
    lines.append("Significance: *** 1%, ** 5%, * 10% (two-sided normal)")
    return "\n".join(lines)


def ms_fit_report(fit: MarkovSwitchingRegression, column_names,
                  verdicts: list[RegimeVerdict], model: str, aggregator: str) -> dict:
    stars = ms_stars(fit)
    verdict_by_regime: dict[int, list[dict]] = {}
    for v in verdicts:
        verdict_by_regime.setdefault(v.regime, []).append(v.to_dict())
    regimes = []
    for s in range(fit.n_regimes):
        coef = fit.coef_[s]
        se = fit.se_[s]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(se > 0, coef / se, np.inf)
        regimes.append({
            "regime": s + 1,
            "coef": [float(c) for c in coef],
            "se": [float(x) for x in se],
            "t": [float(x) for x in t],
            "stars": stars[s],
            "sigma": float(fit.sigmas_[s]),
            "verdicts": verdict_by_regime.get(s + 1, []),
        })
    return {
        "model": model,
        "aggregator": aggregator,
        "columns": list(column_names),
        "n_regimes": int(fit.n_regimes),
        "regimes": regimes,
        "transition": fit.transition_.tolist(),
        "initial_probs": fit.initial_probs_.tolist(),
        "loglik": float(fit.loglik_),
        "aic": float(fit.aic_),
        "n_parameters": int(fit.n_parameters_),
        "nobs": int(fit.smoothed_probs_.shape[0]),
        "converged": bool(fit.converged_),
        "n_iter": int(fit.n_iter_),
        "se_method": getattr(fit, "se_method_", None),
    }


def ms_fit_table(fit: MarkovSwitchingRegression, column_names, title: str) -> str:
    stars = ms_stars(fit)
    S = fit.n_regimes
    width = max(max(len(display_name(c)) for c in column_names), 12)
    col_w = 24
    lines = [title, "=" * (width + 2 + col_w * S)]
    header = f"{'':<{width}}"
    for s in range(S):
        header += f"  {'Regime ' + str(s + 1):^{col_w - 2}}"
    lines.append(header)
    sub = f"{'':<{width}}"
    for _ in range(S):
        sub += f"  {'Coef.':>11}{'t':>11}"
    lines.append(sub)
    lines.append("-" * (width + 2 + col_w * S))
    for j, name in enumerate(column_names):
        row = f"{display_name(name):<{width}}"
        for s in range(S):
            c = fit.coef_[s, j]
            se = fit.se_[s, j]
            t = c / se if se > 0 else np.inf
            row += f"  {_fmt(c) + stars[s][j]:>11}{_fmt(t):>11}"
        lines.append(row)
    sig_row = f"{'sigma':<{width}}"
    for s in range(S):
        sig_row += f"  {_fmt(fit.sigmas_[s], 4):>11}{'':>11}"
    lines.append(sig_row)
    lines.append("-" * (width + 2 + col_w * S))
    lines.append(f"{'AIC':<{width}}  {_fmt(fit.aic_, 1)}")
    lines.append(f"{'Log-likelihood':<{width}}  {_fmt(fit.loglik_, 2)}")
    lines.append(f"{'Obs.':<{width}}  {fit.smoothed_probs_.shape[0]}")
    lines.append("Transition matrix (row = from, col = to):")
    for s in range(S):
        lines.append("  " + "  ".join(_fmt(x) for x in fit.transition_[s]))
    lines.append("Significance: *** 1%, ** 5%, * 10% (two-sided normal)")
    return "\n".join(lines)


def smoothed_probabilities_frame(fit: MarkovSwitchingRegression, dates) -> pd.DataFrame:
    cols = {f"regime_{s + 1}": fit.smoothed_probs_[:, s] for s in range(fit.n_regimes)}
    frame = pd.DataFrame(cols, index=dates)
    frame.index.name = "date"
    return frame


def _jsonable(value):
    """Strict-JSON view: non-finite floats become null, numpy scalars plain."""
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (float, np.floating)):
        return float(value) if np.isfinite(value) else None
    if isinstance(value, (int, np.integer)):
        return int(value)
    return value


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True,
                                     allow_nan=False) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def descriptive_stats_section(stats: pd.DataFrame, grand: dict) -> list[str]:
    lines = ["## Descriptive statistics", ""]
    lines.append("| asset | count | mean | median | sd | skewness | min | max |")
    lines.append("|---|---|---|---|---|---|---|---|")
    for asset, row in stats.iterrows():
        lines.append(
            f"| {asset} | {int(row['count'])} | {_fmt(row['mean'], 4)} | {_fmt(row['median'], 4)} "
            f"| {_fmt(row['sd'], 4)} | {_fmt(row['skewness'], 2)} | {_fmt(row['min'], 4)} "
            f"| {_fmt(row['max'], 4)} |"
        )
    lines.append("")
    lines.append("Grand averages across assets: "
                 + ", ".join(f"{k.removeprefix('grand_')} = {_fmt(v, 4)}" for k, v in grand.items()))
    lines.append("")
    return lines


def run_summary_markdown(sections: dict) -> str:
    """Assemble the consolidated markdown summary; absent parts are marked missing."""
    lines = ["# Herding analysis summary", ""]
    stats = sections.get("descriptive")
    if stats is not None:
        lines.extend(descriptive_stats_section(*stats))
    else:
        lines.extend(["## Descriptive statistics", "", "_missing (run `ingest` first)_", ""])
    for key, heading in (("static", "Static fits"), ("ms", "Markov-switching fits")):
        lines.append(f"## {heading}")
        lines.append("")
        entries = sections.get(key) or []
        if not entries:
            lines.extend([f"_missing (run `fit` with the {key} model)_", ""])
            continue
        for payload in entries:
            lines.append(f"### {payload['model']}")
            lines.append("")
            if key == "static":
                lines.append(f"- R^2 = {_fmt(payload['r2'], 2)}, AIC = {_fmt(payload['aic'], 1)}, "
                             f"nobs = {payload['nobs']}, bandwidth = {payload['bandwidth']}")
                for name, c, t, star in zip(payload["columns"], payload["coef"],
                                            payload["t"], payload["stars"]):
                    lines.append(f"- {display_name(name)}: {_fmt(c)}{star} (t = {_fmt(t)})")
            else:
                lines.append(f"- AIC = {_fmt(payload['aic'], 1)}, loglik = {_fmt(payload['loglik'], 2)}, "
                             f"{payload['n_regimes']} regimes, converged = {payload['converged']}")
                for regime in payload["regimes"]:
                    for verdict in regime["verdicts"]:
                        scope = "" if verdict["direction"] == "all" else f" ({verdict['direction']}-market)"
                        lines.append(
                            f"- regime {regime['regime']}{scope}: {verdict['label']} "
                            f"(coef = {_fmt(verdict['coefficient'])}, t = {_fmt(verdict['t_stat'])})"
                        )
            lines.append("")
    lines.append("## Artifacts")
    lines.append("")
    for name in sections.get("artifacts", []):
        lines.append(f"- {name}")
    missing = sections.get("missing", [])
    if missing:
        lines.append("")
        lines.append("## Missing upstream artifacts")
        lines.append("")
        for name in missing:
            lines.append(f"- {name}")
    lines.append("")
    return "\n".join(lines)


PLOT_STUB = """\
#!/usr/bin/env python3
\"\"\"Plot the emitted dispersion and smoothed-probability CSVs.

Reads the data files next to this script; rendering stays out of the core
package on purpose, any plotting tool can consume the CSVs directly.
\"\"\"
import sys
from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd

here = Path(__file__).parent
disp = pd.read_csv(here / "dispersion.csv", parse_dates=["date"], index_col="date")
fig, axes = plt.subplots(2, 1, sharex=True, figsize=(10, 6))
axes[0].plot(disp.index, disp["rm"], lw=0.6, label="market return")
axes[0].plot(disp.index, disp["rm_squared"], lw=0.6, label="squared market return")
axes[0].legend()
axes[1].plot(disp.index, disp["csad"], lw=0.6, label="CSAD")
axes[1].legend()
for probs_file in sorted(here.glob("smoothed_probs_*.csv")):
    probs = pd.read_csv(probs_file, parse_dates=["date"], index_col="date")
    fig2, ax2 = plt.subplots(figsize=(10, 3))
    probs.plot(ax=ax2, lw=0.7, title=probs_file.stem)
plt.show()
"""

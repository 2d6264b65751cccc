"""Command-line front end: ingest | dispersion | fit | select | report.

Every command is deterministic given its configuration and seed. Outputs go
to --output-dir and existing files are never touched unless --overwrite is
passed, so re-runs cannot silently mutate earlier results. Exit codes are a
stable contract: 0 success, 2 input error, 3 estimation failure.
"""

from __future__ import annotations

import argparse
import io
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import pandas as pd

from herdstat import report as rpt
from herdstat.design import (
    build_design_asymmetric,
    build_design_ch,
    build_design_static,
    squared_return_columns,
)
from herdstat.dispersion import dispersion_table, extreme_day_dummies
from herdstat.errors import DesignError, EstimationError, FetchError, HerdstatError, InputError
from herdstat.markov import classify_regimes, fit_markov_design, select_regime_count
from herdstat.panel import (
    compute_returns,
    market_return,
    parse_panel,
    summarize_panel,
    winsorize_returns,
)
from herdstat.regression import ols_fit

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ESTIMATION = 3

MIN_PIPELINE_DATES = 5


@dataclass
class RunConfig:
    """Documented defaults for every pipeline knob; flags override the config file."""

    input: str | None = None
    format: str = "long"
    fetch_template: str | None = None
    assets: str | None = None
    start: str | None = None
    end: str | None = None
    cache_dir: str = "herdstat_cache"
    timeout: float = 30.0
    aggregator: str = "median"
    lags: int = 3
    tail_fraction: float = 0.05
    regimes: str = "2,3,4"
    n_regimes: int = 3
    alpha: float = 0.05
    bandwidth: str = "auto"
    seed: int = 0
    restarts: int = 10
    max_iter: int = 1000
    tol: float = 1e-8
    top_n: int | None = None
    min_assets: int = 2
    winsorize: float | None = None
    output_dir: str = "herdstat_out"
    overwrite: bool = False


def load_config_file(path) -> dict:
    """Flat key=value file, '#' comments allowed; keys match the CLI flags."""
    values = {}
    known = {f.name for f in fields(RunConfig)}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise InputError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value
    return values


def _coerce(name: str, value):
    if value is None or not isinstance(value, str):
        return value
    if name in ("lags", "seed", "restarts", "max_iter", "min_assets", "top_n", "n_regimes"):
        return int(value)
    if name in ("tail_fraction", "alpha", "tol", "winsorize", "timeout"):
        return float(value)
    if name == "overwrite":
        return value.lower() in ("1", "true", "yes")
    return value


def build_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig()
    if getattr(args, "config", None):
        for key, value in load_config_file(args.config).items():
            setattr(config, key, _coerce(key, value))
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            setattr(config, f.name, _coerce(f.name, flag))
    return config


class OutputDir:
    """Write-once output directory; --overwrite lifts the protection."""

    def __init__(self, root, overwrite: bool):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.overwrite = overwrite

    def path(self, name: str) -> Path:
        target = self.root / name
        if target.exists() and not self.overwrite:
            raise InputError(f"refusing to overwrite {target} (pass --overwrite)")
        return target


def _read_csv_indexed(path, what: str) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise InputError(f"missing {what} file: {path} (run the upstream command first)")
    frame = pd.read_csv(path, parse_dates=["date"], index_col="date")
    return frame


def _fetch_panel_csv(config: RunConfig) -> str:
    """Assemble a long CSV from per-asset fetches (columns date,close[,market_cap])."""
    from herdstat.fetch import fetch_history

    if not (config.assets and config.start and config.end):
        raise InputError("fetch mode needs --assets, --start and --end")
    pieces = []
    for asset in [a.strip() for a in config.assets.split(",") if a.strip()]:
        body = fetch_history(config.fetch_template, asset, config.start, config.end,
                             cache_dir=config.cache_dir, timeout=config.timeout)
        try:
            frame = pd.read_csv(io.BytesIO(body))
        except Exception as exc:
            raise InputError(f"fetched body for {asset} is not CSV: {exc}") from None
        frame.columns = [str(c).strip().lower() for c in frame.columns]
        if not {"date", "close"}.issubset(frame.columns):
            raise InputError(f"fetched CSV for {asset} lacks date/close columns")
        frame["asset"] = asset
        if "market_cap" not in frame.columns:
            frame["market_cap"] = ""
        pieces.append(frame[["date", "asset", "close", "market_cap"]])
    return pd.concat(pieces, ignore_index=True).to_csv(index=False)


def cmd_ingest(config: RunConfig) -> int:
    if config.input:
        if not Path(config.input).exists():
            raise InputError(f"unreadable input path: {config.input}")
        panel = parse_panel(config.input, format=config.format)
    elif config.fetch_template:
        panel = parse_panel(_fetch_panel_csv(config), format="long")
    else:
        raise InputError("ingest needs --input (CSV panel) or --fetch-template (fetch mode)")
    if config.top_n:
        panel = panel.filter_top_assets(config.top_n)
    if len(panel.dates) < MIN_PIPELINE_DATES:
        raise InputError(
            f"panel has {len(panel.dates)} dates; the pipeline needs at least {MIN_PIPELINE_DATES}"
        )
    returns = compute_returns(panel)
    if config.winsorize:
        returns = winsorize_returns(returns, config.winsorize)
    out = OutputDir(config.output_dir, config.overwrite)
    panel.to_long_csv(out.path("panel.csv"))
    returns_out = returns.copy()
    returns_out.insert(0, "date", returns_out.index.strftime("%Y-%m-%d"))
    returns_out.to_csv(out.path("returns.csv"), index=False)
    panel.report.to_json(out.path("validation.json"))
    print(f"ingested {len(panel.assets)} assets x {len(panel.dates)} dates -> {out.root}")
    return EXIT_OK


def cmd_dispersion(config: RunConfig) -> int:
    out = OutputDir(config.output_dir, config.overwrite)
    returns = _read_csv_indexed(Path(config.output_dir) / "returns.csv", "returns")
    market = market_return(returns, aggregator=config.aggregator, min_assets=config.min_assets)
    table = dispersion_table(returns, market)
    usable = table.index
    if len(usable) == 0:
        raise InputError("no usable dates after dispersion computation")
    emitted = pd.DataFrame({
        "rm": table["rm"],
        "rm_squared": table["rm"] ** 2,
        "csad": table["csad"],
        "cssd": table["cssd"],
        "n_assets": table["n_assets"],
    }, index=table.index)
    emitted.insert(0, "date", emitted.index.strftime("%Y-%m-%d"))
    emitted.to_csv(out.path("dispersion.csv"), index=False)
    stub = out.path("plot_dispersion.py")
    stub.write_text(rpt.PLOT_STUB)
    print(f"dispersion series over {usable[0].date()}..{usable[-1].date()} -> {out.root}")
    return EXIT_OK


def _load_dispersion(config: RunConfig) -> pd.DataFrame:
    frame = _read_csv_indexed(Path(config.output_dir) / "dispersion.csv", "dispersion")
    needed = {"rm", "csad"}
    if not needed.issubset(frame.columns):
        raise InputError("dispersion file lacks rm/csad columns")
    return frame


def _build_design(config: RunConfig, disp: pd.DataFrame, design_kind: str):
    if design_kind == "symmetric":
        return build_design_static(disp, lag_count=config.lags)
    if design_kind == "asymmetric":
        return build_design_asymmetric(disp, lag_count=config.lags)
    if design_kind == "ch":
        dummies = extreme_day_dummies(disp, config.tail_fraction)
        return build_design_ch(disp, dummies)
    raise InputError(f"unknown design kind: {design_kind}")


def _bandwidth(config: RunConfig):
    return "auto" if config.bandwidth == "auto" else int(config.bandwidth)


def cmd_fit(config: RunConfig, model: str, design_kind: str) -> int:
    out = OutputDir(config.output_dir, config.overwrite)
    disp = _load_dispersion(config)
    design = _build_design(config, disp, design_kind)
    tag = f"{model}_{design_kind}"
    if model == "static":
        fit = ols_fit(design, bandwidth=_bandwidth(config))
        payload = rpt.static_fit_report(fit, model=tag, aggregator=config.aggregator)
        rpt.write_json(out.path(f"fit_{tag}.json"), payload)
        out.path(f"fit_{tag}.txt").write_text(
            rpt.static_fit_table(fit, title=f"Static {design_kind} herding regression") + "\n")
        print(f"static fit written -> {out.root}/fit_{tag}.json")
        return EXIT_OK
    fit = fit_markov_design(
        design, config.n_regimes, switching_variance=True,
        max_iter=config.max_iter, tol=config.tol,
        n_restarts=config.restarts, seed=config.seed,
    )
    # Extreme-day designs carry no squared-return term, hence no verdicts.
    verdicts = (classify_regimes(fit, design.column_names, alpha=config.alpha)
                if squared_return_columns(design.column_names) else [])
    payload = rpt.ms_fit_report(fit, design.column_names, verdicts, model=tag,
                                aggregator=config.aggregator)
    rpt.write_json(out.path(f"fit_{tag}.json"), payload)
    out.path(f"fit_{tag}.txt").write_text(
        rpt.ms_fit_table(fit, design.column_names,
                         title=f"Markov-switching {design_kind} herding regression") + "\n")
    probs = rpt.smoothed_probabilities_frame(fit, design.dates)
    probs_out = probs.copy()
    probs_out.insert(0, "date", probs_out.index.strftime("%Y-%m-%d"))
    probs_out.to_csv(out.path(f"smoothed_probs_{design_kind}.csv"), index=False)
    print(f"MS fit ({fit.n_regimes} regimes) written -> {out.root}/fit_{tag}.json")
    return EXIT_OK if fit.converged_ else EXIT_ESTIMATION


def cmd_select(config: RunConfig, design_kind: str) -> int:
    out = OutputDir(config.output_dir, config.overwrite)
    disp = _load_dispersion(config)
    design = _build_design(config, disp, design_kind)
    candidates = [int(s) for s in str(config.regimes).split(",") if s.strip()]
    best, table = select_regime_count(
        design, candidates, switching_variance=True,
        max_iter=config.max_iter, tol=config.tol,
        n_restarts=config.restarts, seed=config.seed,
    )
    verdicts = classify_regimes(best, design.column_names, alpha=config.alpha)
    payload = {
        "design": design_kind,
        "candidates": candidates,
        "aic_table": table,
        "selected": rpt.ms_fit_report(best, design.column_names, verdicts,
                                      model=f"ms_{design_kind}", aggregator=config.aggregator),
    }
    rpt.write_json(out.path(f"selection_{design_kind}.json"), payload)
    probs = rpt.smoothed_probabilities_frame(best, design.dates)
    probs_out = probs.copy()
    probs_out.insert(0, "date", probs_out.index.strftime("%Y-%m-%d"))
    probs_out.to_csv(out.path(f"smoothed_probs_selected_{design_kind}.csv"), index=False)
    print(f"selected {best.n_regimes} regimes by AIC -> {out.root}/selection_{design_kind}.json")
    return EXIT_OK


def cmd_report(config: RunConfig) -> int:
    root = Path(config.output_dir)
    out = OutputDir(config.output_dir, config.overwrite)
    sections: dict = {"artifacts": [], "missing": []}
    returns_path = root / "returns.csv"
    if returns_path.exists():
        returns = _read_csv_indexed(returns_path, "returns")
        stats, grand = summarize_panel(returns)
        sections["descriptive"] = (stats, grand)
        sections["artifacts"].append("returns.csv")
    else:
        sections["missing"].append("returns.csv")
    static_payloads, ms_payloads = [], []
    for path in sorted(root.glob("fit_static_*.json")):
        static_payloads.append(rpt.read_json(path))
        sections["artifacts"].append(path.name)
    for path in sorted(root.glob("fit_ms_*.json")):
        ms_payloads.append(rpt.read_json(path))
        sections["artifacts"].append(path.name)
    for path in sorted(root.glob("selection_*.json")):
        ms_payloads.append(rpt.read_json(path)["selected"])
        sections["artifacts"].append(path.name)
    if not (root / "dispersion.csv").exists():
        sections["missing"].append("dispersion.csv")
    else:
        sections["artifacts"].append("dispersion.csv")
    sections["artifacts"].extend(sorted(p.name for p in root.glob("smoothed_probs_*.csv")))
    sections["static"] = static_payloads
    sections["ms"] = ms_payloads
    summary = {
        "descriptive": None,
        "static_fits": static_payloads,
        "ms_fits": ms_payloads,
        "artifacts": sections["artifacts"],
        "missing": sections["missing"],
    }
    if "descriptive" in sections and sections.get("descriptive") is not None:
        stats, grand = sections["descriptive"]
        summary["descriptive"] = {
            "per_asset": {str(a): {k: (None if pd.isna(v) else float(v)) if k != "count" else int(v)
                                   for k, v in row.items()}
                          for a, row in stats.iterrows()},
            "grand": grand,
        }
    rpt.write_json(out.path("report.json"), summary)
    out.path("report.md").write_text(rpt.run_summary_markdown(sections))
    print(f"summary -> {root}/report.json, {root}/report.md")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="herdstat",
        description="Herding diagnostics from asset price panels: dispersion series, "
                    "static and Markov-switching regressions, regime verdicts.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--output-dir", dest="output_dir", help="run output directory")
    common.add_argument("--overwrite", action="store_const", const=True, default=None,
                        help="allow overwriting prior outputs")
    common.add_argument("--seed", type=int, help="random seed for restarts")
    common.add_argument("--aggregator", choices=("mean", "median"),
                        help="market-return aggregator (default median)")
    common.add_argument("--lags", type=int, help="lagged dispersion terms (default 3)")
    common.add_argument("--bandwidth", help="Newey-West bandwidth or 'auto'")
    common.add_argument("--alpha", type=float, help="significance level (default 0.05)")
    common.add_argument("--regimes", help="comma-separated regime candidates for select")
    common.add_argument("--n-regimes", dest="n_regimes", type=int,
                        help="regime count for fit --model ms (default 3)")
    common.add_argument("--restarts", type=int, help="EM restarts (default 10)")
    common.add_argument("--max-iter", dest="max_iter", type=int, help="EM iteration cap")
    common.add_argument("--tol", type=float, help="EM convergence tolerance")
    common.add_argument("--tail-fraction", dest="tail_fraction", type=float,
                        help="extreme-day tail fraction (default 0.05)")
    common.add_argument("--top-n", dest="top_n", type=int,
                        help="keep the N largest assets by mean market cap")
    common.add_argument("--min-assets", dest="min_assets", type=int,
                        help="minimum cross-section size per date (default 2)")
    common.add_argument("--winsorize", type=float,
                        help="symmetric per-date winsorization fraction (robustness)")
    sub = parser.add_subparsers(dest="command", required=True)
    p_ingest = sub.add_parser("ingest", parents=[common], help="parse and validate a price panel")
    p_ingest.add_argument("--input", help="CSV panel path")
    p_ingest.add_argument("--format", choices=("long", "wide"), help="CSV layout (default long)")
    p_ingest.add_argument("--fetch-template", dest="fetch_template",
                          help="URL template with {asset},{start},{end} (fetch mode)")
    p_ingest.add_argument("--assets", help="comma-separated asset ids for fetch mode")
    p_ingest.add_argument("--start", help="fetch range start (ISO date)")
    p_ingest.add_argument("--end", help="fetch range end (ISO date)")
    p_ingest.add_argument("--cache-dir", dest="cache_dir", help="fetch cache directory")
    p_ingest.add_argument("--timeout", type=float, help="fetch timeout seconds (default 30)")
    sub.add_parser("dispersion", parents=[common], help="compute rm/CSAD/CSSD series")
    p_fit = sub.add_parser("fit", parents=[common], help="fit a herding regression")
    p_fit.add_argument("--model", choices=("static", "ms"), default="static")
    p_fit.add_argument("--design", choices=("symmetric", "asymmetric", "ch"), default="symmetric")
    p_select = sub.add_parser("select", parents=[common], help="choose the regime count by AIC")
    p_select.add_argument("--design", choices=("symmetric", "asymmetric"), default="symmetric")
    sub.add_parser("report", parents=[common], help="consolidated run summary")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = build_config(args)
        if args.command == "ingest":
            return cmd_ingest(config)
        if args.command == "dispersion":
            return cmd_dispersion(config)
        if args.command == "fit":
            return cmd_fit(config, args.model, args.design)
        if args.command == "select":
            return cmd_select(config, args.design)
        if args.command == "report":
            return cmd_report(config)
        parser.error(f"unknown command {args.command}")
    except (InputError, FetchError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DesignError, EstimationError) as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except HerdstatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

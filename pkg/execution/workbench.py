"""
Workbench de carteiras consistentes: linha de comando.

    python execution/workbench.py <comando> [--config arquivo] [flags]

Comandos: calibrate, frontier, grid, consistency, expost, backtest, simulate,
validate, run. Saída 0 em sucesso, 2 em erro de pré-condição, 1 em erro interno.
"""
import argparse
import os
import sys
import time
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

import run_log
from backtest import ledger_frame, run_strategies, summary_frame
from calibration import (
    CHI2_2_20PCT,
    CriticalValueTable,
    level_percentile,
    lookup,
    power_curve,
    read_table,
    reference_ratio,
    write_table,
)
from calibration import calibrate as calibrate_table
from config import RunConfig, build_config, config_hash, parse_value
from consistency import (
    LEVELS,
    ConsistencyParams,
    Timeline,
    averaged_coordinates,
    build_grid,
    build_timeline,
    consistency_frontier,
    grid_frame,
    min_consistent_c,
    origin_indices,
    proportion_series,
    timeline_maps,
)
from errors import CalibrationMissingError, InsufficientHistoryError, OutputExistsError, PreconditionError, WorkbenchError
from estimation import MomentEstimate, estimate
from expost import (
    METHOD0,
    METHOD1,
    ForecastCovarianceSpec,
    beta_constants,
    compare_frontiers,
    cvar_normal,
    efficient_frontier_equation,
    expost_consistency_test,
    expost_frontier_method0,
    expost_frontier_method1,
    standard_constants,
)
from market_data import ReturnsPanel, WindowSpec, load_returns, write_returns
from optimizer import frontier
from randgen import SeededSource, mvn_series, synthetic_market_moments

COMMANDS = ("calibrate", "frontier", "grid", "consistency", "expost", "backtest", "simulate", "validate", "run")

# flag -> chave do RunConfig
FLAGS = {
    "--m": "M", "--k": "K", "--h": "H", "--b": "B", "--c": "C", "--u": "U", "--rp": "RP",
    "--gamma": "gamma", "--level": "level", "--seed": "seed", "--estimator": "estimator",
    "--input": "input", "--out": "out", "--reps": "reps", "--repetitions": "repetitions",
    "--p-draws": "p_draws", "--periods": "periods", "--n-assets": "n_assets", "--split": "split",
    "--forecast-mode": "forecast_mode", "--table": "table", "--workers": "workers",
    "--smoothing-window": "smoothing_window", "--m-grid": "m_grid", "--k-grid": "k_grid",
    "--power-scales": "power_scales",
}

POWER_LEVELS = (0.20, 0.10, 0.05)


def _fmt(x) -> str:
    return repr(float(x))


class Outputs:
    """Arquivos de saída de um comando: cabeçalho de proveniência, nunca sobrescreve sem --overwrite."""

    def __init__(self, config: RunConfig, command: str):
        self.config = config
        self.command = command
        self.header = f"# command={command} config_sha256={config_hash(config)} seed={config.seed}"
        self.written: List[str] = []

    def claim(self, name: str) -> str:
        return self.claim_path(os.path.join(self.config.out, name))

    def claim_path(self, path: str) -> str:
        if os.path.exists(path) and not self.config.overwrite:
            raise OutputExistsError(f"Arquivo de saída já existe: {path} (use --overwrite)")
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        self.written.append(path)
        return path

    def frame(self, name: str, frame: pd.DataFrame) -> str:
        path = self.claim(name)
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(self.header + "\n")
            frame.to_csv(f, index=False, lineterminator="\n")
        return path


def _params(config: RunConfig, M: Optional[int] = None) -> ConsistencyParams:
    return ConsistencyParams(
        M=config.M if M is None else M,
        K=config.K,
        H=config.H,
        B=config.B,
        C=config.C,
        U=config.U,
        RP=config.RP,
        estimator=config.estimator,
        seed=config.seed,
        smoothing_window=config.smoothing_window,
    )


def simulated_panel(config: RunConfig) -> ReturnsPanel:
    """Painel normal multivariado com momentos de fator único; stream 0 para momentos, 1 para retornos."""
    mean, cov = synthetic_market_moments(config.n_assets, SeededSource(config.seed, 0))
    return mvn_series(mean, cov, config.periods, SeededSource(config.seed, 1))


def load_panel(config: RunConfig, required: bool = False) -> ReturnsPanel:
    if config.input:
        if not os.path.exists(config.input):
            raise PreconditionError(f"Arquivo de retornos não encontrado: {config.input}")
        panel = load_returns(config.input)
        run_log.ok(f"{panel.periods} períodos × {panel.n_assets} ativos lidos de {config.input}")
        return panel
    if required:
        raise PreconditionError("Este comando precisa de um arquivo de retornos (--input)")
    panel = simulated_panel(config)
    run_log.ok(f"Painel simulado: {panel.periods} períodos × {panel.n_assets} ativos (seed {config.seed})")
    return panel


def load_table(config: RunConfig) -> CriticalValueTable:
    path = config.table_path
    if not os.path.exists(path):
        raise CalibrationMissingError(f"Tabela de valores críticos não encontrada: {path} (rode calibrate antes)")
    table = read_table(path)
    if table.H != config.H:
        raise CalibrationMissingError(f"Tabela calibrada com H={table.H}, configuração pede H={config.H}")
    return table


def latest_origin(panel: ReturnsPanel, M: int, H: int) -> int:
    """Última origem com H períodos fora da amostra."""
    if panel.periods < M + H:
        raise InsufficientHistoryError(M + H, panel.periods)
    return panel.periods - 1 - H


def _weights_text(w) -> str:
    return ";".join(_fmt(x) for x in w)


# ---------------------------------------------------------------------------
# comandos


def cmd_calibrate(config: RunConfig, out: Outputs, log: run_log.RunLog) -> None:
    table = CriticalValueTable(reps=config.reps, repetitions=config.repetitions, seed=config.seed, H=config.H)
    for M in config.m_grid:
        for K in config.k_grid:
            print(f"\nCalibrando M={M}, K={K}, H={config.H}, γ={list(config.gamma)}...")
            try:
                part = calibrate_table(
                    M, K, config.H, config.gamma, config.reps, config.repetitions, config.seed, config.workers
                )
            except WorkbenchError as e:
                log.error(f"Falha na calibração de M={M}, K={K}: {e}", {"M": M, "K": K})
                continue
            table = table.merge(part)
            run_log.ok(f"{len(part)} valores críticos", indent=3)
            log.success(f"Calibrado M={M}, K={K}", {"M": M, "K": K, "rows": len(part)})
    if not len(table):
        raise CalibrationMissingError("Nenhuma célula (M, K) calibrada")
    write_table(table, out.claim_path(config.table_path), out.header)

    rows = []
    pct = level_percentile(0.20)
    for M in config.m_grid:
        for K in config.k_grid:
            value = table.entries.get((M, K, 1.0, pct))
            if value is None:
                continue
            ratio = value / CHI2_2_20PCT
            ref = reference_ratio(M, K)
            rows.append({
                "M": M, "K": K, "critical_80": _fmt(value), "ratio": _fmt(ratio),
                "reference_ratio": "na" if ref is None else _fmt(ref),
            })
            ref_text = "sem referência" if ref is None else f"referência {ref:.2f}"
            print(f"   M={M:4d} K={K:4d}  razão {ratio:.3f}  ({ref_text})")
    if rows:
        out.frame("calibration_summary.csv", pd.DataFrame(rows))

    if config.power_scales:
        print(f"\nCurva de poder em M={config.M}, K={config.K}...")
        try:
            points = power_curve(
                config.M, config.K, config.power_scales, POWER_LEVELS, config.reps, config.seed, table,
                gamma=config.gamma[0], workers=config.workers,
            )
        except WorkbenchError as e:
            log.error(f"Falha na curva de poder: {e}", {"M": config.M, "K": config.K})
        else:
            frame = pd.DataFrame([
                {"level": _fmt(p.level), "theta_scale": _fmt(p.theta_scale),
                 "rejection_rate": _fmt(p.rejection_rate), "critical_value": _fmt(p.critical_value)}
                for p in points
            ])
            out.frame("power_curve.csv", frame)
            run_log.ok(f"{len(points)} pontos da curva de poder")


def cmd_frontier(config: RunConfig, out: Outputs, log: run_log.RunLog) -> None:
    panel = load_panel(config)
    origin = latest_origin(panel, config.M, config.H)
    moments = estimate(panel, WindowSpec(origin, config.M, config.H), config.estimator).repaired()
    fr = frontier(moments, config.U, config.B)
    rows = [
        {"origin_date": panel.dates[origin], "b": b + 1, "target_return": _fmt(p.expected_return),
         "stdev": _fmt(p.stdev), "provenance": p.provenance, "active_bounds": len(p.active_bounds),
         "weights": _weights_text(p.weights)}
        for b, p in enumerate(fr.points)
    ]
    out.frame("frontier.csv", pd.DataFrame(rows))
    run_log.ok(f"Fronteira com {len(fr)} pontos na origem {panel.dates[origin]}")
    log.success("Fronteira eficiente", {"origin": panel.dates[origin], "B": config.B})


def cmd_grid(config: RunConfig, out: Outputs, log: run_log.RunLog) -> None:
    panel = load_panel(config)
    origin = latest_origin(panel, config.M, config.H)
    grid = build_grid(
        panel, origin, config.M, config.H, config.B, config.C, config.U, config.RP, config.estimator, config.seed
    )
    rows = []
    fallbacks = 0
    for cell in grid.cells():
        p = cell.portfolio
        fallbacks += p.provenance == "fallback"
        rows.append({
            "origin_date": grid.date, "b": cell.b, "c": cell.c, "target_return": _fmt(cell.target_return),
            "target_sd": _fmt(cell.target_sd), "expected_return": _fmt(p.expected_return),
            "stdev": _fmt(p.stdev), "provenance": p.provenance, "weights": _weights_text(p.weights),
        })
    out.frame("grid.csv", pd.DataFrame(rows))
    if fallbacks:
        log.warning(f"{fallbacks} célula(s) com carteira de fallback", {"fallbacks": fallbacks})
    run_log.ok(f"Grade {config.B}×{config.C} na origem {grid.date}")
    log.success("Grade de carteiras", {"origin": grid.date, "fallbacks": fallbacks})


def _realized_stack(timeline: Timeline, e: int) -> np.ndarray:
    return np.stack([timeline.scores[k].realized for k in timeline.window(e)])


def _timeline(panel: ReturnsPanel, config: RunConfig, log: run_log.RunLog, M: Optional[int] = None,
              last_only: bool = False) -> Timeline:
    params = _params(config, M)
    origins = origin_indices(panel.periods, params.M, params.K, params.H)
    chosen = origins[-params.K:] if last_only else origins
    print(f"\nConstruindo {len(chosen)} grade(s) (M={params.M}, K={params.K}, H={params.H})...")
    timeline = build_timeline(panel, params, chosen, workers=config.workers)
    for k, reason in sorted(timeline.failures.items()):
        log.error(f"Origem {panel.dates[timeline.origins[k]]} falhou: {reason}", {"origin": k})
    run_log.ok(f"{len(timeline.grids)} grade(s) prontas, {len(timeline.failures)} falha(s)")
    return timeline


def cmd_consistency(config: RunConfig, out: Outputs, log: run_log.RunLog) -> None:
    panel = load_panel(config)
    table = load_table(config)
    timeline = _timeline(panel, config, log, last_only=True)
    e = timeline.evaluation_count - 1
    if not timeline.complete(e):
        raise PreconditionError("Origens da última data de avaliação falharam; mapa indisponível")
    grids = [timeline.grids[k] for k in timeline.window(e)]
    latest = grids[-1]
    averaged = averaged_coordinates(grids)
    realized = _realized_stack(timeline, e)

    frames, frontier_rows = [], []
    for gamma in config.gamma:
        cmap = timeline_maps(timeline, table, gamma, config.level)[e]
        frame = grid_frame(latest, cmap, realized, averaged)
        frame.insert(0, "gamma", _fmt(gamma))
        frames.append(frame)
        for b, p in consistency_frontier(cmap, latest):
            frontier_rows.append({"gamma": _fmt(gamma), "b": b, "expected_return": _fmt(p.expected_return),
                                  "stdev": _fmt(p.stdev), "weights": _weights_text(p.weights)})
        print(f"   γ={gamma}: {cmap.proportion:.1%} das células consistentes (crítico {cmap.critical:.4f})")
        log.success("Mapa de consistência", {"gamma": gamma, "proportion": cmap.proportion, "critical": cmap.critical})
    out.frame("consistency_map.csv", pd.concat(frames, ignore_index=True))
    out.frame("consistency_frontier.csv", pd.DataFrame(frontier_rows, columns=["gamma", "b", "expected_return", "stdev", "weights"]))


def _expost_rows(date: str, points, method: str) -> List[Dict]:
    return [
        {"origin_date": date, "method": method, "b": b + 1, "theta": _fmt(p.theta),
         "target_return": _fmt(p.target_return), "mu_pf": _fmt(p.mu_pf), "var_pf": _fmt(p.var_pf),
         "sd_pf": _fmt(p.sd_pf), "exante_var": _fmt(p.exante_var)}
        for b, p in enumerate(points)
    ]


def _expost_pair(config: RunConfig, moments: MomentEstimate, fr, M: int, stream: int):
    spec = ForecastCovarianceSpec.validation(moments.covariance, config.forecast_mode, M)
    m0 = expost_frontier_method0(moments, config.U, fr, config.forecast_mode, M)
    m1 = expost_frontier_method1(moments, config.U, fr.returns, config.p_draws, config.seed, spec, stream)
    return m0, m1


def cmd_expost(config: RunConfig, out: Outputs, log: run_log.RunLog) -> None:
    panel = load_panel(config)
    origin = latest_origin(panel, config.M, config.H)
    moments = estimate(panel, WindowSpec(origin, config.M, config.H), config.estimator).repaired()
    fr = frontier(moments, config.U, config.B)
    m0, m1 = _expost_pair(config, moments, fr, config.M, origin)
    rows = _expost_rows(panel.dates[origin], m0, METHOD0) + _expost_rows(panel.dates[origin], m1, METHOD1)
    out.frame("expost_frontier.csv", pd.DataFrame(rows))

    spec = ForecastCovarianceSpec.validation(moments.covariance, config.forecast_mode, config.M)
    consts = standard_constants(moments.mean, moments.covariance)
    eq = efficient_frontier_equation(consts, beta_constants(consts, spec, moments.mean))
    out.frame("expost_equation.csv", pd.DataFrame([{
        "origin_date": panel.dates[origin], "forecast_mode": config.forecast_mode,
        "A0": _fmt(eq.A0), "A1": _fmt(eq.A1), "B0": _fmt(eq.B0), "B1": _fmt(eq.B1),
    }]))
    run_log.ok(f"Fronteiras ex-post (Métodos 0 e 1) com {len(m0)} pontos")
    log.success("Fronteira ex-post", {"origin": panel.dates[origin], "mode": config.forecast_mode})


def _strategy_reports(timeline: Timeline, table: CriticalValueTable, config: RunConfig):
    maps = {g: timeline_maps(timeline, table, g, config.level) for g in config.gamma}
    return run_strategies(timeline, maps, config.split, config.strategy_a_all_cells)


def _report_lines(reports) -> None:
    for r in reports:
        s_in, s_out = r.spans["in-sample"], r.spans["out-of-sample"]
        tag = r.strategy if r.gamma is None else f"{r.strategy} γ={r.gamma}"
        mark = " *" if r.selected else ""
        print(f"   {tag:12s} dentro {s_in.mean:+.5f}/{s_in.sharpe:.3f}  fora {s_out.mean:+.5f}/{s_out.sharpe:.3f}{mark}")


def cmd_backtest(config: RunConfig, out: Outputs, log: run_log.RunLog) -> None:
    panel = load_panel(config)
    table = load_table(config)
    timeline = _timeline(panel, config, log)
    reports = _strategy_reports(timeline, table, config)
    out.frame("backtest_ledger.csv", ledger_frame(reports))
    out.frame("backtest_summary.csv", summary_frame(reports))
    _report_lines(reports)
    log.success("Backtest das estratégias A e B", {"periods": len(reports[0].ledger), "gammas": list(config.gamma)})


def cmd_simulate(config: RunConfig, out: Outputs, log: run_log.RunLog) -> None:
    panel = simulated_panel(config)
    write_returns(panel, out.claim("simulated_returns.csv"), out.header)
    run_log.ok(f"{panel.periods} períodos × {panel.n_assets} ativos gravados")
    log.success("Painel simulado", {"periods": panel.periods, "n_assets": panel.n_assets})


def _validate_one(M: int, panel: ReturnsPanel, table: CriticalValueTable, config: RunConfig,
                  out: Outputs, log: run_log.RunLog) -> Dict:
    timeline = _timeline(panel, config, log, M=M, last_only=True)
    e = timeline.evaluation_count - 1
    if not timeline.complete(e):
        raise PreconditionError(f"Origens de M={M} falharam; mapa indisponível")
    cmap = timeline_maps(timeline, table, 1.0, config.level)[e]
    window = timeline.window(e)
    grids = [timeline.grids[k] for k in window]
    out.frame(f"validate_grid_M{M}.csv", grid_frame(grids[-1], cmap, _realized_stack(timeline, e), averaged_coordinates(grids)))

    per_method = {METHOD0: [], METHOD1: []}
    cf_points, rows = [], []
    for k, grid in zip(window, grids):
        moments = MomentEstimate(grid.mean, grid.covariance, config.estimator, M)
        m0, m1 = _expost_pair(config, moments, grid.frontier, M, timeline.origins[k])
        per_method[METHOD0].append(m0)
        per_method[METHOD1].append(m1)
        rows += _expost_rows(grid.date, m0, METHOD0) + _expost_rows(grid.date, m1, METHOD1)
        cf_points.append({b: (p.expected_return, p.stdev) for b, p in consistency_frontier(cmap, grid)})
    out.frame(f"validate_expost_M{M}.csv", pd.DataFrame(rows))

    realized = np.stack([timeline.scores[k].realized[:, 0] for k in window])
    critical = lookup(table, M, config.K, 1.0, config.level)
    tests = []
    for method, frontiers in per_method.items():
        mu = np.array([[p.mu_pf for p in f] for f in frontiers])
        var = np.array([[p.var_pf for p in f] for f in frontiers])
        for res in expost_consistency_test(realized, mu, var, config.H, critical):
            tests.append({"M": M, "method": method, "b": res.b, "statistic": _fmt(res.outcome.statistic),
                          "pvalue": _fmt(res.pvalue), "consistent": int(res.consistent)})

    diffs = [
        {"M": M, "method": d.method, "b": d.b, "vol_diff": "na" if np.isnan(d.vol_diff) else _fmt(d.vol_diff),
         "cvar_diff_bp": "na" if np.isnan(d.cvar_diff_bp) else _fmt(d.cvar_diff_bp), "origins": d.origins}
        for d in compare_frontiers(cf_points, per_method, config.B)
    ]
    min_c = min_consistent_c(cmap)
    latest_fr = grids[-1].frontier
    cvar_fr = cvar_normal(latest_fr.returns, latest_fr.stdevs)
    summary = {
        "M": M,
        "consistent_fraction": _fmt(cmap.proportion),
        "mean_min_c": "na" if np.all(np.isnan(min_c)) else _fmt(np.nanmean(min_c)),
        "levels_with_consistent_cell": int(np.sum(~np.isnan(min_c))),
        "critical": _fmt(cmap.critical),
        "frontier_cvar_b1_bp": _fmt(1e4 * cvar_fr[0]),
    }
    run_log.ok(f"M={M}: {cmap.proportion:.1%} consistentes", indent=3)
    log.success(f"Validação M={M}", {"M": M, "proportion": cmap.proportion})
    return {"summary": summary, "tests": tests, "diffs": diffs}


def cmd_validate(config: RunConfig, out: Outputs, log: run_log.RunLog) -> None:
    panel = load_panel(config)
    table = load_table(config)
    summaries, tests, diffs = [], [], []
    for M in config.m_grid:
        try:
            result = _validate_one(M, panel, table, config, out, log)
        except OutputExistsError:
            raise
        except WorkbenchError as e:
            log.error(f"Validação de M={M} falhou: {e}", {"M": M})
            continue
        summaries.append(result["summary"])
        tests += result["tests"]
        diffs += result["diffs"]
    if not summaries:
        raise PreconditionError("Nenhum valor de M validado")
    out.frame("validate_summary.csv", pd.DataFrame(summaries))
    out.frame("validate_differences.csv", pd.DataFrame(diffs))
    test_frame = pd.DataFrame(tests)
    out.frame("validate_expost_test.csv", test_frame)
    averaged = (
        test_frame.assign(pvalue=test_frame["pvalue"].astype(float))
        .groupby(["method", "b"], sort=True)["pvalue"]
        .agg(["mean", "count"])
        .reset_index()
    )
    averaged["mean"] = averaged["mean"].map(_fmt)
    out.frame("validate_pvalues.csv", averaged.rename(columns={"mean": "avg_pvalue", "count": "runs"}))


def cmd_run(config: RunConfig, out: Outputs, log: run_log.RunLog) -> None:
    panel = load_panel(config, required=True)
    table = load_table(config)
    params = _params(config)
    timeline = _timeline(panel, config, log)

    gamma0 = config.gamma[0]
    maps = timeline_maps(timeline, table, gamma0, config.level)
    print(f"\nGravando {len(maps)} grade(s) por data de avaliação (γ={gamma0})...")
    for e, cmap in sorted(maps.items()):
        grids = [timeline.grids[k] for k in timeline.window(e)]
        out.frame(
            os.path.join("run_grids", f"grid_{grids[-1].date}.csv"),
            grid_frame(grids[-1], cmap, _realized_stack(timeline, e), averaged_coordinates(grids)),
        )
    skipped = timeline.evaluation_count - len(maps)
    if skipped:
        log.warning(f"{skipped} data(s) de avaliação sem mapa por falha de origem", {"skipped": skipped})

    rows = []
    for gamma in config.gamma:
        series = proportion_series(panel, params, table, gamma, LEVELS, timeline=timeline)
        for i, date in enumerate(series.dates):
            row = {"date": date, "gamma": _fmt(gamma)}
            for lv in LEVELS:
                row[f"proportion_{int(round(lv * 100)):02d}"] = _fmt(series.proportions[lv][i])
            row["index_high"] = _fmt(series.index_high[i])
            row["index_low"] = _fmt(series.index_low[i])
            rows.append(row)
    out.frame("run_proportions.csv", pd.DataFrame(rows))
    run_log.ok(f"Série de proporções para {len(config.gamma)} valor(es) de γ")

    reports = _strategy_reports(timeline, table, config)
    out.frame("backtest_ledger.csv", ledger_frame(reports))
    out.frame("backtest_summary.csv", summary_frame(reports))
    _report_lines(reports)
    log.success("Execução completa", {"dates": len(maps), "periods": len(reports[0].ledger)})


HANDLERS = {
    "calibrate": cmd_calibrate,
    "frontier": cmd_frontier,
    "grid": cmd_grid,
    "consistency": cmd_consistency,
    "expost": cmd_expost,
    "backtest": cmd_backtest,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
    "run": cmd_run,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="Arquivo KEY=value com a configuração")
    for flag, key in FLAGS.items():
        common.add_argument(flag, dest=key, type=str, default=None)
    common.add_argument("--overwrite", dest="overwrite", action="store_const", const=True, default=None,
                        help="Permite sobrescrever arquivos de saída existentes")
    common.add_argument("--strategy-a-all-cells", dest="strategy_a_all_cells", action="store_const", const=True,
                        default=None, help="Estratégia A escolhe entre todas as células, não só a fronteira")
    parser = argparse.ArgumentParser(description="Workbench de carteiras consistentes.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def cli_overrides(args: argparse.Namespace) -> Dict[str, object]:
    out = {}
    for key in list(FLAGS.values()):
        raw = getattr(args, key)
        if raw is not None:
            out[key] = parse_value(key, raw)
    for key in ("overwrite", "strategy_a_all_cells"):
        if getattr(args, key) is not None:
            out[key] = True
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    command = args.command
    start_time = time.time()
    log = None

    run_log.banner(f"Workbench de carteiras consistentes: {command}")
    try:
        config = build_config(cli_overrides(args), args.config)
        os.makedirs(config.out, exist_ok=True)
        log = run_log.RunLog(command, config.out)
        out = Outputs(config, command)
        log.success("Início", {"config_sha256": config_hash(config), "seed": config.seed})
        HANDLERS[command](config, out, log)
        elapsed_time = time.time() - start_time
        print("\n" + "=" * 60)
        print(f"OK: {command} concluído em {elapsed_time:.2f} segundos ({len(out.written)} arquivo(s))")
        print("=" * 60)
        return 0
    except PreconditionError as e:
        print(f"\nERRO: {e}")
        if log is not None:
            log.log(run_log.ERROR, str(e), {"kind": type(e).__name__})
        return 2
    except Exception as e:
        error_msg = f"Erro interno em {command}: {str(e)}"
        print(f"\nERRO: {error_msg}")
        if log is not None:
            log.log(run_log.ERROR, error_msg, {"kind": type(e).__name__})
        return 1
    finally:
        if log is not None:
            log.write()


if __name__ == "__main__":
    sys.exit(main())

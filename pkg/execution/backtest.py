"""
Estratégia A (maior Sharpe dentro da amostra na fronteira) contra Estratégia
B (maior Sharpe entre as células consistentes, caixa quando não há nenhuma).

A decisão na origem t_{e+K} usa o mapa da data de avaliação e, que fica
conhecido exatamente nesse período, e a carteira da grade dessa origem.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from consistency import ConsistencyMap, Timeline
from errors import DegenerateSampleError, PreconditionError

STRATEGY_A = "A"
STRATEGY_B = "B"
CASH = "CASH"
IN_SAMPLE = "in-sample"
OUT_OF_SAMPLE = "out-of-sample"

LEDGER_COLUMNS = ["strategy", "gamma", "date", "choice", "b", "c", "realized_return"]
SUMMARY_COLUMNS = ["strategy", "gamma", "span", "periods", "mean", "stdev", "sharpe", "sharpe_defined", "cash_periods", "selected"]


@dataclass(frozen=True)
class LedgerEntry:
    date: str
    choice: str
    b: Optional[int]
    c: Optional[int]
    realized_return: float


@dataclass(frozen=True)
class SpanStats:
    periods: int
    mean: float
    stdev: float
    sharpe: float
    sharpe_defined: bool
    cash_periods: int


@dataclass(frozen=True)
class BacktestReport:
    strategy: str
    gamma: Optional[float]
    ledger: Tuple[LedgerEntry, ...]
    spans: Dict[str, SpanStats] = field(default_factory=dict)
    selected: bool = False


def sharpe(series) -> float:
    """Média / desvio (divisor n), taxa livre de risco zero."""
    x = np.asarray(series, dtype=float)
    if x.shape[0] < 2:
        raise PreconditionError(f"Sharpe precisa de pelo menos 2 retornos (recebido {x.shape[0]})")
    sd = x.std()
    if sd <= 0.0:
        raise DegenerateSampleError("Desvio-padrão zero: Sharpe indefinido")
    return float(x.mean() / sd)


def span_stats(entries: Sequence[LedgerEntry]) -> SpanStats:
    x = np.array([e.realized_return for e in entries], dtype=float)
    cash = sum(1 for e in entries if e.choice == CASH)
    if x.size == 0:
        return SpanStats(0, float("nan"), float("nan"), float("nan"), False, 0)
    try:
        s, defined = sharpe(x), True
    except PreconditionError:
        s, defined = float("nan"), False
    return SpanStats(
        periods=int(x.size),
        mean=float(x.mean()),
        stdev=float(x.std()),
        sharpe=s,
        sharpe_defined=defined,
        cash_periods=cash,
    )


def insample_sharpe(mean: np.ndarray, sd: np.ndarray) -> np.ndarray:
    """Sharpe por célula; células sem variância ficam em -inf."""
    out = np.full(mean.shape, -np.inf)
    ok = sd > 0.0
    out[ok] = mean[ok] / sd[ok]
    return out


def pick(scores: np.ndarray, candidates: np.ndarray) -> Optional[Tuple[int, int]]:
    """argmax entre candidatos; empate vai para o menor b e depois o menor c."""
    idx = np.flatnonzero(np.ravel(candidates))
    if idx.size == 0:
        return None
    flat = int(idx[np.argmax(np.ravel(scores)[idx])])
    b, c = np.unravel_index(flat, np.shape(scores))
    return int(b), int(c)


def _entry(date: str, choice: Optional[Tuple[int, int]], realized: np.ndarray) -> LedgerEntry:
    if choice is None:
        return LedgerEntry(date=date, choice=CASH, b=None, c=None, realized_return=0.0)
    b, c = choice
    return LedgerEntry(
        date=date, choice=f"{b + 1}:{c}", b=b + 1, c=c, realized_return=float(realized[b, c])
    )


def _with_spans(strategy: str, gamma, ledger: List[LedgerEntry], split: int) -> BacktestReport:
    return BacktestReport(
        strategy=strategy,
        gamma=gamma,
        ledger=tuple(ledger),
        spans={IN_SAMPLE: span_stats(ledger[:split]), OUT_OF_SAMPLE: span_stats(ledger[split:])},
    )


def run_strategies(
    timeline: Timeline,
    maps_by_gamma: Dict[float, Dict[int, ConsistencyMap]],
    split: int = 200,
    strategy_a_all_cells: bool = False,
) -> List[BacktestReport]:
    """
    Um relatório da Estratégia A e um da B por γ. O γ escolhido é o de maior
    retorno médio da B no trecho dentro da amostra (primeiro na ordem em
    empate) e sai marcado em `selected`.
    """
    K = timeline.params.K
    periods = len(timeline.origins) - K
    if periods < 1:
        raise PreconditionError("Sem origens de decisão depois das K primeiras")
    if split < 0:
        raise PreconditionError(f"split deve ser >= 0 (recebido {split})")
    dates = []
    for e in range(periods):
        d = e + K
        if d not in timeline.scores:
            raise PreconditionError(f"Origem de decisão {d} sem grade/PIT: {timeline.failures.get(d, 'ausente')}")
        dates.append(timeline.grids[d].date)

    ledger_a = []
    for e in range(periods):
        score = timeline.scores[e + K]
        ratios = insample_sharpe(score.insample_mean, score.insample_sd)
        candidates = np.ones(ratios.shape, dtype=bool) if strategy_a_all_cells else _frontier_mask(ratios.shape)
        ledger_a.append(_entry(dates[e], pick(ratios, candidates), score.realized))
    reports = [_with_spans(STRATEGY_A, None, ledger_a, split)]

    b_reports = []
    for gamma in sorted(maps_by_gamma, reverse=True):
        maps = maps_by_gamma[gamma]
        ledger_b = []
        for e in range(periods):
            if e not in maps:
                raise PreconditionError(f"Mapa de consistência ausente na data de avaliação {e} (γ={gamma})")
            score = timeline.scores[e + K]
            ratios = insample_sharpe(score.insample_mean, score.insample_sd)
            ledger_b.append(_entry(dates[e], pick(ratios, maps[e].consistent), score.realized))
        b_reports.append(_with_spans(STRATEGY_B, gamma, ledger_b, split))

    if b_reports:
        means = [r.spans[IN_SAMPLE].mean for r in b_reports]
        finite = [m if np.isfinite(m) else -np.inf for m in means]
        best = int(np.argmax(finite))
        b_reports[best] = BacktestReport(
            strategy=STRATEGY_B,
            gamma=b_reports[best].gamma,
            ledger=b_reports[best].ledger,
            spans=b_reports[best].spans,
            selected=True,
        )
    return reports + b_reports


def _frontier_mask(shape) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    mask[:, 0] = True
    return mask


def ledger_frame(reports: Sequence[BacktestReport]) -> pd.DataFrame:
    rows = []
    for r in reports:
        for entry in r.ledger:
            rows.append({
                "strategy": r.strategy,
                "gamma": "" if r.gamma is None else repr(r.gamma),
                "date": entry.date,
                "choice": entry.choice,
                "b": "" if entry.b is None else entry.b,
                "c": "" if entry.c is None else entry.c,
                "realized_return": repr(entry.realized_return),
            })
    return pd.DataFrame(rows, columns=LEDGER_COLUMNS)


def summary_frame(reports: Sequence[BacktestReport]) -> pd.DataFrame:
    rows = []
    for r in reports:
        for span in (IN_SAMPLE, OUT_OF_SAMPLE):
            s = r.spans[span]
            rows.append({
                "strategy": r.strategy,
                "gamma": "" if r.gamma is None else repr(r.gamma),
                "span": span,
                "periods": s.periods,
                "mean": repr(s.mean),
                "stdev": repr(s.stdev),
                "sharpe": repr(s.sharpe) if s.sharpe_defined else "na",
                "sharpe_defined": int(s.sharpe_defined),
                "cash_periods": s.cash_periods,
                "selected": int(r.selected),
            })
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)

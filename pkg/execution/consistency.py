"""
Grade B×C de carteiras dentro da fronteira eficiente, PIT de cada posição da
grade em cada origem, mapa de consistência por Berkowitz suavizado no eixo
da volatilidade, fronteira de consistência e série de proporções.

Origens: t_k = M - 1 + k·H, k = 0..n_origins-1, com H períodos fora da
amostra depois de cada uma. O mapa da data de avaliação e usa as origens
e..e+K-1 e fica conhecido em t_{e+K}.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.ndimage import convolve1d

from calibration import CriticalValueTable, lookup
from density import berkowitz_many, empirical_cdf_many, pit_to_normal, summarize_many
from errors import InsufficientHistoryError, PreconditionError, SolverError, WorkbenchError
from estimation import SAMPLE, estimate
from market_data import ReturnsPanel, WindowSpec, horizon_returns
from optimizer import (
    Frontier,
    Portfolio,
    check_feasibility,
    frontier,
    grid_portfolio,
    nearest_portfolio,
    random_weight_matrix,
)
from randgen import SeededSource

SMOOTHING_WINDOW = 9
LEVELS = (0.20, 0.05)

GRID_COLUMNS = [
    "origin_date", "b", "c", "target_return", "target_sd", "avg_target_return", "avg_target_sd",
    "realized_mean", "realized_sd", "statistic", "smoothed", "consistent", "provenance", "weights",
]


@dataclass(frozen=True)
class ConsistencyParams:
    M: int = 312
    K: int = 39
    H: int = 4
    B: int = 11
    C: int = 50
    U: float = 0.33
    RP: int = 500
    estimator: str = SAMPLE
    seed: int = 0
    smoothing_window: int = SMOOTHING_WINDOW

    def __post_init__(self):
        if self.H < 1 or self.M < self.H + 1:
            raise PreconditionError(f"Precisa M > H >= 1 (M={self.M}, H={self.H})")
        if self.B < 2 or self.C < 2:
            raise PreconditionError(f"B e C devem ser >= 2 (B={self.B}, C={self.C})")
        if self.K < 2:
            raise PreconditionError(f"K deve ser >= 2 (K={self.K})")
        if self.smoothing_window < 1 or self.smoothing_window % 2 == 0:
            raise PreconditionError(f"Janela de suavização deve ser ímpar >= 1 ({self.smoothing_window})")


@dataclass(frozen=True)
class GridCell:
    b: int
    c: int
    target_return: float
    target_sd: float
    portfolio: Portfolio
    records: Tuple[Tuple[int, float, float], ...] = ()


@dataclass(frozen=True)
class Grid:
    origin_index: int
    date: str
    frontier: Frontier
    target_returns: np.ndarray
    target_sds: np.ndarray
    weights: np.ndarray
    provenance: np.ndarray
    mean: np.ndarray = field(repr=False, default=None)
    covariance: np.ndarray = field(repr=False, default=None)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.target_sds.shape

    def cell(self, b: int, c: int) -> GridCell:
        """Célula (b, c) com b = 1..B e c = 0..C-1."""
        i = b - 1
        w = self.weights[i, c]
        variance = float(w @ self.covariance @ w)
        return GridCell(
            b=b,
            c=c,
            target_return=float(self.target_returns[i]),
            target_sd=float(self.target_sds[i, c]),
            portfolio=Portfolio(
                weights=w,
                expected_return=float(self.mean @ w),
                stdev=float(np.sqrt(max(variance, 0.0))),
                provenance=str(self.provenance[i, c]),
            ),
        )

    def cells(self) -> List[GridCell]:
        B, C = self.shape
        return [self.cell(b, c) for b in range(1, B + 1) for c in range(C)]


@dataclass(frozen=True)
class OriginScore:
    origin_index: int
    probabilities: np.ndarray
    realized: np.ndarray
    insample_mean: np.ndarray
    insample_sd: np.ndarray


@dataclass(frozen=True)
class ConsistencyMap:
    raw: np.ndarray
    smoothed: np.ndarray
    consistent: np.ndarray
    level: float
    gamma: float
    critical: float
    proportion: float


@dataclass
class Timeline:
    params: ConsistencyParams
    origins: List[int]
    grids: Dict[int, Grid] = field(default_factory=dict)
    scores: Dict[int, OriginScore] = field(default_factory=dict)
    failures: Dict[int, str] = field(default_factory=dict)

    @property
    def evaluation_count(self) -> int:
        return len(self.origins) - self.params.K + 1

    def window(self, e: int) -> List[int]:
        return list(range(e, e + self.params.K))

    def complete(self, e: int) -> bool:
        return all(k in self.scores for k in self.window(e))


def origin_indices(T: int, M: int, K: int, H: int) -> List[int]:
    """t_k = M - 1 + k·H enquanto t_k + H <= T - 1; exige pelo menos K origens (T >= M + K·H)."""
    required = M + K * H
    if T < required:
        raise InsufficientHistoryError(required, T)
    count = (T - 1 - H - (M - 1)) // H + 1
    return [M - 1 + k * H for k in range(count)]


def build_grid(
    panel: ReturnsPanel,
    origin_index: int,
    M: int,
    H: int,
    B: int,
    C: int,
    U: float,
    RP: int,
    estimator: str = SAMPLE,
    seed: int = 0,
) -> Grid:
    """
    Fronteira em B níveis; por nível, RP carteiras aleatórias definem a maior
    volatilidade SD_{b,C-1}; C alvos de volatilidade igualmente espaçados a
    partir da fronteira. Coluna c = 0 é a própria fronteira; as demais saem de
    grid_portfolio partindo da carteira aleatória mais próxima.
    """
    if B < 2 or C < 2:
        raise PreconditionError(f"B e C devem ser >= 2 (B={B}, C={C})")
    window = WindowSpec(origin_index, M, H)
    moments = estimate(panel, window, estimator).repaired()
    fr = frontier(moments, U, B)
    n = moments.n_assets
    source = SeededSource(seed, origin_index)

    randoms: List[List[Portfolio]] = []
    sds = np.empty((B, C))
    for i, point in enumerate(fr.points):
        w = random_weight_matrix(moments, point.expected_return, U, RP, source.child(i + 1))
        level = [Portfolio.from_weights(row, moments, "random") for row in w]
        randoms.append(level)
        top = max(max(p.stdev for p in level), point.stdev)
        sds[i] = np.linspace(point.stdev, top, C)

    returns = fr.returns
    return_range = float(returns[-1] - returns[0])
    sd_range = float(sds.max() - sds.min())
    weights = np.empty((B, C, n))
    provenance = np.empty((B, C), dtype=object)
    for i, point in enumerate(fr.points):
        weights[i, 0] = point.weights
        provenance[i, 0] = point.provenance
        for c in range(1, C):
            start = nearest_portfolio(randoms[i], returns[i], sds[i, c], return_range, sd_range)
            cell = grid_portfolio(moments, returns[i], sds[i, c], U, start)
            weights[i, c] = cell.weights
            provenance[i, c] = cell.provenance
            report = check_feasibility(cell.weights, U, moments.mean, returns[i])
            if not report.ok():
                raise SolverError(
                    f"Célula (b={i + 1}, c={c}) inviável na origem {origin_index}: "
                    f"orçamento {report.budget:.2e}, caixa {report.box:.2e}, retorno {report.target:.2e}"
                )
    return Grid(
        origin_index=origin_index,
        date=panel.dates[origin_index],
        frontier=fr,
        target_returns=returns,
        target_sds=sds,
        weights=weights,
        provenance=provenance,
        mean=moments.mean,
        covariance=moments.covariance,
    )


def score_origin(panel: ReturnsPanel, grid: Grid, M: int, H: int) -> OriginScore:
    """PIT do retorno realizado de cada posição da grade sob a cdf empírica dos retornos sobrepostos."""
    window = WindowSpec(grid.origin_index, M, H)
    B, C = grid.shape
    flat = grid.weights.reshape(B * C, -1)
    insample = horizon_returns(window.rows(panel) @ flat.T, H).T
    sorted_s, means, sds = summarize_many(insample)
    realized = (window.out_of_sample_rows(panel) @ flat.T).sum(axis=0)
    p = empirical_cdf_many(sorted_s, means, sds, realized)
    return OriginScore(
        origin_index=grid.origin_index,
        probabilities=p.reshape(B, C),
        realized=realized.reshape(B, C),
        insample_mean=means.reshape(B, C),
        insample_sd=sds.reshape(B, C),
    )


def smooth(raw: np.ndarray, window: int = SMOOTHING_WINDOW) -> np.ndarray:
    """Média móvel simétrica no eixo c, truncada nas bordas da grade."""
    kernel = np.ones(window)
    total = convolve1d(raw, kernel, axis=-1, mode="constant", cval=0.0)
    count = convolve1d(np.ones_like(raw), kernel, axis=-1, mode="constant", cval=0.0)
    return total / count


def build_map(raw: np.ndarray, critical: float, level: float, gamma: float, window: int = SMOOTHING_WINDOW) -> ConsistencyMap:
    raw = np.asarray(raw, dtype=float)
    smoothed = smooth(raw, window)
    consistent = smoothed < critical
    return ConsistencyMap(
        raw=raw,
        smoothed=smoothed,
        consistent=consistent,
        level=level,
        gamma=gamma,
        critical=critical,
        proportion=float(consistent.mean()),
    )


def berkowitz_grid(scores: Sequence[OriginScore], gamma: float) -> np.ndarray:
    """Estatística B×C sobre as K origens, na ordem cronológica."""
    p = np.stack([s.probabilities for s in scores], axis=-1)
    return berkowitz_many(pit_to_normal(p), gamma)[0]


def score_cells(
    scores: Sequence[OriginScore],
    M: int,
    gamma: float,
    table: CriticalValueTable,
    level: float = 0.20,
    window: int = SMOOTHING_WINDOW,
) -> ConsistencyMap:
    critical = lookup(table, M, len(scores), gamma, level)
    return build_map(berkowitz_grid(scores, gamma), critical, level, gamma, window)


def consistency_frontier(cmap: ConsistencyMap, grid: Grid) -> List[Tuple[int, Portfolio]]:
    """Por nível b, a célula consistente de menor c; níveis sem célula consistente ficam de fora."""
    out = []
    for i in range(cmap.consistent.shape[0]):
        hits = np.flatnonzero(cmap.consistent[i])
        if hits.size:
            out.append((i + 1, grid.cell(i + 1, int(hits[0])).portfolio))
    return out


def min_consistent_c(cmap: ConsistencyMap) -> np.ndarray:
    """Menor c consistente por b (NaN se nenhum)."""
    out = np.full(cmap.consistent.shape[0], np.nan)
    for i, row in enumerate(cmap.consistent):
        hits = np.flatnonzero(row)
        if hits.size:
            out[i] = hits[0]
    return out


def averaged_coordinates(grids: Sequence[Grid]) -> Tuple[np.ndarray, np.ndarray]:
    """Retorno alvo e volatilidade alvo de cada posição, médias sobre as origens."""
    if not grids:
        raise PreconditionError("Nenhuma grade para calcular coordenadas médias")
    B, C = grids[0].shape
    rets = np.mean([np.repeat(g.target_returns[:, None], C, axis=1) for g in grids], axis=0)
    sds = np.mean([g.target_sds for g in grids], axis=0)
    return rets, sds


def running_extremes(panel: ReturnsPanel, end_indices: Sequence[int], span: int) -> Tuple[np.ndarray, np.ndarray]:
    """Máximo e mínimo negado do retorno do índice igualmente ponderado nos `span` períodos até cada índice."""
    index_returns = panel.returns.mean(axis=1)
    highs, lows = [], []
    for t in end_indices:
        start = max(0, t - span + 1)
        chunk = index_returns[start:t + 1]
        highs.append(chunk.max())
        lows.append(-chunk.min())
    return np.array(highs), np.array(lows)


def _origin_task(args):
    panel, origin, params = args
    try:
        grid = build_grid(
            panel, origin, params.M, params.H, params.B, params.C, params.U, params.RP, params.estimator, params.seed
        )
        return origin, grid, score_origin(panel, grid, params.M, params.H), None
    except WorkbenchError as e:
        return origin, None, None, str(e)


def build_timeline(
    panel: ReturnsPanel, params: ConsistencyParams, origins: Optional[Sequence[int]] = None, workers: int = 1
) -> Timeline:
    """
    Grades e PITs de todas as origens. Falha numa origem fica registrada em
    `failures` e as datas de avaliação que dependem dela são puladas.
    """
    all_origins = origin_indices(panel.periods, params.M, params.K, params.H)
    chosen = all_origins if origins is None else list(origins)
    timeline = Timeline(params=params, origins=all_origins)
    tasks = [(panel, k_origin, params) for k_origin in chosen]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_origin_task, tasks))
    else:
        results = [_origin_task(t) for t in tasks]
    position = {t: k for k, t in enumerate(all_origins)}
    for origin, grid, score, error in results:
        k = position[origin]
        if error is not None:
            timeline.failures[k] = error
            continue
        timeline.grids[k] = grid
        timeline.scores[k] = score
    return timeline


def timeline_maps(
    timeline: Timeline, table: CriticalValueTable, gamma: float, level: float
) -> Dict[int, ConsistencyMap]:
    """Mapa por data de avaliação e (só as completas)."""
    params = timeline.params
    critical = lookup(table, params.M, params.K, gamma, level)
    maps = {}
    for e in range(timeline.evaluation_count):
        if not timeline.complete(e):
            continue
        scores = [timeline.scores[k] for k in timeline.window(e)]
        maps[e] = build_map(berkowitz_grid(scores, gamma), critical, level, gamma, params.smoothing_window)
    return maps


def evaluation_date_index(timeline: Timeline, e: int) -> int:
    """Período em que o mapa e fica conhecido: t_{e+K-1} + H."""
    return timeline.origins[e + timeline.params.K - 1] + timeline.params.H


@dataclass(frozen=True)
class ProportionSeries:
    dates: Tuple[str, ...]
    gamma: float
    proportions: Dict[float, np.ndarray]
    index_high: np.ndarray
    index_low: np.ndarray


def proportion_series(
    panel: ReturnsPanel,
    params: ConsistencyParams,
    table: CriticalValueTable,
    gamma: float = 1.0,
    levels: Sequence[float] = LEVELS,
    timeline: Optional[Timeline] = None,
    workers: int = 1,
) -> ProportionSeries:
    """
    Proporção de células consistentes por data de avaliação, em cada nível.
    Exige T >= M + K·H; datas com origem falha ficam de fora.
    """
    if timeline is None:
        timeline = build_timeline(panel, params, workers=workers)
    per_level = {lv: timeline_maps(timeline, table, gamma, lv) for lv in levels}
    evals = sorted(set.intersection(*(set(m) for m in per_level.values()))) if per_level else []
    ends = [evaluation_date_index(timeline, e) for e in evals]
    high, low = running_extremes(panel, ends, params.K * params.H)
    return ProportionSeries(
        dates=tuple(panel.dates[t] for t in ends),
        gamma=gamma,
        proportions={lv: np.array([per_level[lv][e].proportion for e in evals]) for lv in levels},
        index_high=high,
        index_low=low,
    )


def grid_frame(
    grid: Grid,
    cmap: ConsistencyMap,
    realized: np.ndarray,
    averaged: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> pd.DataFrame:
    """
    Uma linha por célula: coordenadas da origem mais recente, coordenadas
    médias, média/desvio realizados sobre as K origens, estatística bruta e
    suavizada, decisão e pesos separados por ';'.
    `realized` é K×B×C.
    """
    B, C = grid.shape
    avg_r, avg_sd = averaged if averaged is not None else (
        np.repeat(grid.target_returns[:, None], C, axis=1), grid.target_sds
    )
    realized = np.asarray(realized, dtype=float)
    r_mean = realized.mean(axis=0)
    r_sd = realized.std(axis=0)
    rows = []
    for i in range(B):
        for c in range(C):
            rows.append({
                "origin_date": grid.date,
                "b": i + 1,
                "c": c,
                "target_return": repr(float(grid.target_returns[i])),
                "target_sd": repr(float(grid.target_sds[i, c])),
                "avg_target_return": repr(float(avg_r[i, c])),
                "avg_target_sd": repr(float(avg_sd[i, c])),
                "realized_mean": repr(float(r_mean[i, c])),
                "realized_sd": repr(float(r_sd[i, c])),
                "statistic": repr(float(cmap.raw[i, c])),
                "smoothed": repr(float(cmap.smoothed[i, c])),
                "consistent": int(cmap.consistent[i, c]),
                "provenance": grid.provenance[i, c],
                "weights": ";".join(repr(float(x)) for x in grid.weights[i, c]),
            })
    return pd.DataFrame(rows, columns=GRID_COLUMNS)

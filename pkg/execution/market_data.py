"""
Painéis de retornos: leitura do CSV, janelas móveis de estimação e retornos
de carteira sobrepostos em H períodos.

Retornos são tratados como log-retornos por período, então o retorno de H
períodos é a soma.
"""
import io
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd

from errors import DimensionError, OrderingError, ParseError, PreconditionError, StructuralError


@dataclass(frozen=True)
class ReturnsPanel:
    dates: Tuple[str, ...]
    tickers: Tuple[str, ...]
    returns: np.ndarray

    def __post_init__(self):
        returns = np.array(self.returns, dtype=float)
        returns.setflags(write=False)
        object.__setattr__(self, "returns", returns)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "tickers", tuple(self.tickers))
        if returns.ndim != 2:
            raise StructuralError("returns deve ser uma matriz T×N")
        if returns.shape != (len(self.dates), len(self.tickers)):
            raise StructuralError(
                f"Formato {returns.shape} não bate com {len(self.dates)} datas × {len(self.tickers)} tickers"
            )
        if not np.all(np.isfinite(returns)):
            row, col = np.argwhere(~np.isfinite(returns))[0]
            raise StructuralError(f"Valor ausente/não finito na linha {row + 1}, coluna '{self.tickers[col]}'")
        if len(set(self.tickers)) != len(self.tickers):
            raise StructuralError("Tickers duplicados no cabeçalho")
        for i in range(1, len(self.dates)):
            if not self.dates[i] > self.dates[i - 1]:
                raise OrderingError(f"Datas fora de ordem na linha {i + 1}: {self.dates[i - 1]} -> {self.dates[i]}")

    @property
    def periods(self) -> int:
        return self.returns.shape[0]

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]


@dataclass(frozen=True)
class WindowSpec:
    origin_index: int
    length: int
    horizon: int

    def __post_init__(self):
        if self.horizon < 1 or self.length < self.horizon:
            raise PreconditionError(f"Janela inválida: precisa M >= H >= 1 (M={self.length}, H={self.horizon})")
        if self.start < 0:
            raise PreconditionError(
                f"Janela começa antes do painel: t_k={self.origin_index}, M={self.length}"
            )

    @property
    def start(self) -> int:
        return self.origin_index - self.length + 1

    def rows(self, panel: ReturnsPanel) -> np.ndarray:
        if self.origin_index >= panel.periods:
            raise PreconditionError(
                f"Origem t_k={self.origin_index} fora do painel ({panel.periods} períodos)"
            )
        return panel.returns[self.start:self.origin_index + 1]

    def out_of_sample_rows(self, panel: ReturnsPanel) -> np.ndarray:
        end = self.origin_index + self.horizon
        if end >= panel.periods:
            raise PreconditionError(
                f"Sem {self.horizon} períodos fora da amostra após t_k={self.origin_index}"
            )
        return panel.returns[self.origin_index + 1:end + 1]


def load_returns(source: Union[str, bytes, io.IOBase]) -> ReturnsPanel:
    """
    Lê um CSV `date,<ticker>,...` (UTF-8, datas ISO, retornos decimais).
    Aceita caminho, bytes ou stream. Linhas de comentário '#' são ignoradas.
    """
    if isinstance(source, bytes):
        source = io.BytesIO(source)
    try:
        frame = pd.read_csv(source, dtype=str, keep_default_na=False, comment="#", encoding="utf-8")
    except pd.errors.ParserError as e:
        raise StructuralError(f"Linhas com número de colunas diferente: {e}") from e
    if frame.shape[1] < 2 or frame.columns[0].strip().lower() != "date":
        raise StructuralError("Cabeçalho deve ser 'date,<ticker>,...'")

    tickers = tuple(c.strip() for c in frame.columns[1:])
    dates = []
    values = np.empty((len(frame), len(tickers)))
    for i, row in enumerate(frame.itertuples(index=False, name=None)):
        line = i + 2  # cabeçalho é a linha 1
        raw_date = row[0].strip()
        try:
            dates.append(pd.Timestamp(raw_date).strftime("%Y-%m-%d"))
        except ValueError as e:
            raise ParseError(line, "date", raw_date) from e
        for j, cell in enumerate(row[1:]):
            cell = cell.strip()
            if cell == "":
                raise StructuralError(f"Célula vazia na linha {line}, coluna '{tickers[j]}'")
            try:
                values[i, j] = float(cell)
            except ValueError as e:
                raise ParseError(line, tickers[j], cell) from e
    return ReturnsPanel(dates=tuple(dates), tickers=tickers, returns=values)


def write_returns(panel: ReturnsPanel, target, header: Optional[str] = None) -> None:
    """Serializa o painel no mesmo formato que load_returns lê."""
    frame = pd.DataFrame(panel.returns, columns=list(panel.tickers))
    frame.insert(0, "date", list(panel.dates))
    if isinstance(target, (str, bytes)) or hasattr(target, "__fspath__"):
        with open(target, "w", encoding="utf-8", newline="") as f:
            _write_frame(frame, f, header)
    else:
        _write_frame(frame, target, header)


def _write_frame(frame: pd.DataFrame, f, header: Optional[str]) -> None:
    if header:
        f.write(header.rstrip("\n") + "\n")
    frame.to_csv(f, index=False, float_format="%.17g", lineterminator="\n")


def portfolio_return_series(panel: ReturnsPanel, weights, window: WindowSpec) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if weights.shape[-1] != panel.n_assets:
        raise DimensionError(f"Pesos com {weights.shape[-1]} ativos, painel com {panel.n_assets}")
    return window.rows(panel) @ weights.T


def horizon_returns(series, horizon: int) -> np.ndarray:
    """
    Retornos sobrepostos de H períodos: M - H + 1 somas móveis ao longo do
    primeiro eixo (aceita matriz, uma coluna por carteira).
    """
    series = np.asarray(series, dtype=float)
    m = series.shape[0]
    if horizon < 1 or m < horizon:
        raise PreconditionError(f"Série com {m} períodos não comporta H={horizon}")
    if horizon == 1:
        return series.copy()
    windows = np.lib.stride_tricks.sliding_window_view(series, horizon, axis=0)
    return windows.sum(axis=-1)

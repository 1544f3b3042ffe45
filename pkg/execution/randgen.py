"""
Fontes aleatórias com semente e geração de cenários normais multivariados.

Cada (seed, stream) vira um gerador Philox (contador) independente; a mesma
dupla reproduz a mesma sequência em qualquer plataforma e em qualquer ordem
de execução das tarefas.
"""
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import linalg
from scipy.special import ndtri

from errors import NonSPDCovarianceError, PreconditionError
from market_data import ReturnsPanel

# 53 bits de mantissa: uniformes no centro de cada célula, nunca 0 ou 1
_UNIFORM_BITS = 2 ** 53


@dataclass(frozen=True)
class SeededSource:
    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, self.stream])
        return np.random.Generator(np.random.Philox(seq))

    def child(self, index: int) -> "SeededSource":
        """Fluxo da tarefa `index`: seed ⊕ índice, mesmo stream."""
        return SeededSource(self.seed ^ index, self.stream)


def uniforms(count: int, source: SeededSource) -> np.ndarray:
    if count < 1:
        raise PreconditionError(f"count deve ser >= 1 (recebido {count})")
    raw = source.generator().integers(0, _UNIFORM_BITS, size=count, dtype=np.int64)
    return (raw.astype(np.float64) + 0.5) / _UNIFORM_BITS


def standard_normals(count: int, source: SeededSource) -> np.ndarray:
    """Normais N(0,1) pela inversa da cdf aplicada a uniformes."""
    return ndtri(uniforms(count, source))


def cholesky_lower(cov: np.ndarray) -> np.ndarray:
    try:
        return linalg.cholesky(np.asarray(cov, dtype=float), lower=True)
    except linalg.LinAlgError as e:
        raise NonSPDCovarianceError(f"Falha na fatoração de Cholesky: {e}") from e


def mvn_draws(mean: np.ndarray, cov: np.ndarray, count: int, source: SeededSource) -> np.ndarray:
    """Matriz count×N de vetores mean + L·z."""
    mean = np.asarray(mean, dtype=float)
    n = mean.shape[0]
    factor = cholesky_lower(cov)
    z = standard_normals(count * n, source).reshape(count, n)
    return mean + z @ factor.T


def mvn_series(mean, cov, periods: int, source: SeededSource, tickers=None, start: str = "2000-01-03"):
    """Painel sintético de retornos semanais ~ N(mean, cov)."""
    returns = mvn_draws(mean, cov, periods, source)
    n = returns.shape[1]
    tickers = tuple(tickers) if tickers is not None else tuple(f"A{i + 1:02d}" for i in range(n))
    dates = tuple(d.strftime("%Y-%m-%d") for d in pd.date_range(start=start, periods=periods, freq="7D"))
    return ReturnsPanel(dates=dates, tickers=tickers, returns=returns)


def synthetic_market_moments(n_assets: int, source: SeededSource):
    """
    Momentos semanais de um universo de fator único na escala do DJ30
    (volatilidade anual entre ~20% e ~45%, médias anuais de 2% a 25%).
    """
    rng = source.generator()
    weeks = 52.0
    market_vol = 0.16 / np.sqrt(weeks)
    betas = rng.uniform(0.6, 1.4, size=n_assets)
    total_vol = rng.uniform(0.20, 0.45, size=n_assets) / np.sqrt(weeks)
    idio_var = np.maximum(total_vol ** 2 - (betas * market_vol) ** 2, (0.05 / np.sqrt(weeks)) ** 2)
    cov = np.outer(betas, betas) * market_vol ** 2 + np.diag(idio_var)
    mean = rng.uniform(0.02, 0.25, size=n_assets) / weeks
    return mean, cov

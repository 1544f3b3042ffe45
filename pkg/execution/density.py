"""
Previsão de densidade por cdf empírica dos retornos sobrepostos, PIT para a
normal padrão e estatística de Berkowitz (padrão e ewma).

As funções *_many operam no último eixo, uma linha por carteira/réplica.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtri
from scipy.stats import chi2

from errors import DegenerateSampleError, PreconditionError

STANDARD = "standard"
EWMA = "ewma"

_TINY = np.finfo(float).tiny
_ALMOST_ONE = np.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class SampleSummary:
    sorted: np.ndarray
    mean: float
    stdev: float
    n: int

    @classmethod
    def from_returns(cls, returns) -> "SampleSummary":
        r = np.sort(np.asarray(returns, dtype=float))
        return cls(sorted=r, mean=float(r.mean()), stdev=float(r.std()), n=r.shape[0])


@dataclass(frozen=True)
class PitSeries:
    probabilities: np.ndarray
    normals: np.ndarray

    @classmethod
    def from_probabilities(cls, probabilities) -> "PitSeries":
        p = np.asarray(probabilities, dtype=float)
        return cls(probabilities=p, normals=pit_to_normal(p))

    @property
    def k(self) -> int:
        return self.normals.shape[0]


@dataclass(frozen=True)
class BerkowitzOutcome:
    statistic: float
    variant: str
    mean: float
    variance: float
    k: int
    gamma: float = 1.0


def summarize_many(samples: np.ndarray):
    """Ordena cada linha e devolve (sorted, médias, desvios com divisor n)."""
    s = np.sort(np.asarray(samples, dtype=float), axis=-1)
    return s, s.mean(axis=-1), s.std(axis=-1)


def empirical_cdf_many(sorted_samples: np.ndarray, means, stdevs, r_out) -> np.ndarray:
    """
    cdf empírica avaliada em r_out para cada linha de sorted_samples.

    Dentro de (r'_1, r'_n]: (L + ½ + (r - r'_L)/(r'_{L+1} - r'_L))/(n+1), com
    L = quantidade estritamente abaixo de r. Fora: cauda normal
    [1/(2(n+1))]·Φ(z_r)/Φ(z_1), e o espelho na cauda superior.
    """
    s = np.asarray(sorted_samples, dtype=float)
    if s.ndim == 1:
        s = s[None, :]
    n = s.shape[-1]
    if n < 2:
        raise PreconditionError(f"cdf empírica precisa de n >= 2 observações (n={n})")
    lead = s.shape[:-1]
    r = np.broadcast_to(np.asarray(r_out, dtype=float), lead)
    mu = np.broadcast_to(np.asarray(means, dtype=float), lead)
    sd = np.broadcast_to(np.asarray(stdevs, dtype=float), lead)

    below = np.sum(s < r[..., None], axis=-1)
    first = s[..., 0]
    last = s[..., -1]
    edge = 0.5 / (n + 1)
    p = np.empty(lead)

    interior = (below >= 1) & (below <= n - 1)
    if np.any(interior):
        L = below[interior]
        rows = s[interior]
        lo = np.take_along_axis(rows, (L - 1)[:, None], axis=-1)[:, 0]
        hi = np.take_along_axis(rows, L[:, None], axis=-1)[:, 0]
        p[interior] = (L + 0.5 + (r[interior] - lo) / (hi - lo)) / (n + 1)

    at_first = (below == 0) & (r == first)
    p[at_first] = edge

    lower = (below == 0) & (r < first)
    upper = below == n
    tails = lower | upper
    if np.any(tails):
        if np.any(sd[tails] <= 0.0):
            raise DegenerateSampleError("σ̂_R = 0 com retorno fora da amostra: cauda normal indefinida")
        z_r = (r - mu) / np.where(sd > 0.0, sd, 1.0)
        z_1 = (first - mu) / np.where(sd > 0.0, sd, 1.0)
        z_n = (last - mu) / np.where(sd > 0.0, sd, 1.0)
        p[lower] = edge * np.exp(log_ndtr(z_r[lower]) - log_ndtr(z_1[lower]))
        p[upper] = 1.0 - edge * np.exp(log_ndtr(-z_r[upper]) - log_ndtr(-z_n[upper]))
    return np.clip(p, _TINY, _ALMOST_ONE)


def empirical_cdf(summary: SampleSummary, r_out: float) -> float:
    return float(empirical_cdf_many(summary.sorted, summary.mean, summary.stdev, r_out)[0])


def pit_to_normal(p):
    p_arr = np.asarray(p, dtype=float)
    if np.any(~(p_arr > 0.0) | ~(p_arr < 1.0)):
        raise PreconditionError("Probabilidade PIT fora de (0, 1)")
    y = ndtri(p_arr)
    return float(y) if np.ndim(p) == 0 else y


def ewma_weights(k: int, gamma: float) -> np.ndarray:
    """Pesos γ^(K-k), k = 1..K, normalizados para somar 1."""
    if not 0.0 < gamma <= 1.0:
        raise PreconditionError(f"γ deve estar em (0, 1], recebido {gamma}")
    w = gamma ** np.arange(k - 1, -1, -1, dtype=float)
    return w / w.sum()


def berkowitz_many(y: np.ndarray, gamma: float = 1.0):
    """
    Estatísticas de Berkowitz no último eixo (K valores por linha).
    Com γ = 1 devolve Σy² - K·ln σ̂² - K; com γ < 1 a versão ewma normalizada
    Σw·y² - ln σ̂²_w - 1. Retorna (estatística, média, variância).
    """
    y = np.asarray(y, dtype=float)
    k = y.shape[-1]
    if k < 2:
        raise PreconditionError(f"Berkowitz precisa de K >= 2 valores (K={k})")
    if gamma == 1.0:
        mean = y.mean(axis=-1)
        var = np.mean((y - mean[..., None]) ** 2, axis=-1)
        if np.any(var <= 0.0):
            raise DegenerateSampleError("Variância zero em y: verossimilhança degenerada")
        stat = np.sum(y * y, axis=-1) - k * np.log(var) - k
    else:
        return _ewma_many(y, gamma)
    return np.maximum(stat, 0.0), mean, var


def _ewma_many(y: np.ndarray, gamma: float):
    w = ewma_weights(y.shape[-1], gamma)
    mean = y @ w
    var = ((y - mean[..., None]) ** 2) @ w
    if np.any(var <= 0.0):
        raise DegenerateSampleError("Variância ponderada zero em y: verossimilhança degenerada")
    stat = (y * y) @ w - np.log(var) - 1.0
    return np.maximum(stat, 0.0), mean, var


def berkowitz(y: PitSeries) -> BerkowitzOutcome:
    stat, mean, var = berkowitz_many(y.normals, 1.0)
    return BerkowitzOutcome(statistic=float(stat), variant=STANDARD, mean=float(mean), variance=float(var), k=y.k)


def berkowitz_ewma(y: PitSeries, gamma: float) -> BerkowitzOutcome:
    if not 0.0 < gamma <= 1.0:
        raise PreconditionError(f"γ deve estar em (0, 1], recebido {gamma}")
    if y.k < 2:
        raise PreconditionError(f"Berkowitz precisa de K >= 2 valores (K={y.k})")
    stat, mean, var = _ewma_many(y.normals, gamma)
    return BerkowitzOutcome(
        statistic=float(stat), variant=EWMA, mean=float(mean), variance=float(var), k=y.k, gamma=gamma
    )


def score(y: PitSeries, gamma: float = 1.0) -> BerkowitzOutcome:
    return berkowitz(y) if gamma == 1.0 else berkowitz_ewma(y, gamma)


def berkowitz_pvalue(outcome: BerkowitzOutcome, dof: int = 2) -> float:
    """p-valor assintótico χ²₂ da estatística padrão."""
    if outcome.variant != STANDARD:
        raise PreconditionError("p-valor χ² só vale para a estatística padrão (γ = 1)")
    return float(chi2.sf(outcome.statistic, dof))

"""
Vetor de médias e matriz de covariância de uma janela: momentos amostrais
(divisor M) ou encolhimento de Ledoit-Wolf para o alvo de índice único.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from errors import DegenerateSampleError, PreconditionError
from market_data import ReturnsPanel, WindowSpec

SAMPLE = "sample"
LEDOIT_WOLF = "ledoit-wolf"
ESTIMATORS = (SAMPLE, LEDOIT_WOLF)

# troque para 1 para o divisor M - 1
COVARIANCE_DDOF = 0

SPD_FLOOR = 1e-10


@dataclass(frozen=True)
class MomentEstimate:
    mean: np.ndarray
    covariance: np.ndarray
    estimator: str
    sample_size: int
    shrinkage: Optional[float] = None

    @property
    def n_assets(self) -> int:
        return self.mean.shape[0]

    def repaired(self) -> "MomentEstimate":
        return MomentEstimate(
            mean=self.mean,
            covariance=repair_spd(self.covariance),
            estimator=self.estimator,
            sample_size=self.sample_size,
            shrinkage=self.shrinkage,
        )


def symmetrize(cov: np.ndarray) -> np.ndarray:
    return 0.5 * (cov + cov.T)


def repair_spd(cov: np.ndarray) -> np.ndarray:
    """
    Se o menor autovalor ficar abaixo de 1e-10·traço/N, soma a diferença na
    diagonal. Matriz nula vira 1e-10·I para a fatoração não quebrar.
    """
    cov = symmetrize(np.asarray(cov, dtype=float))
    n = cov.shape[0]
    floor = SPD_FLOOR * np.trace(cov) / n
    if floor <= 0.0:
        floor = SPD_FLOOR
    lam_min = np.linalg.eigvalsh(cov)[0]
    if lam_min < floor:
        cov = cov + (floor - lam_min) * np.eye(n)
    return cov


def _window_returns(panel: ReturnsPanel, window: WindowSpec) -> np.ndarray:
    if window.length < 2:
        raise PreconditionError(f"Janela com M={window.length} < 2 observações")
    return window.rows(panel)


def sample_moments(panel: ReturnsPanel, window: WindowSpec) -> MomentEstimate:
    x = _window_returns(panel, window)
    return _sample_from_rows(x)


def _sample_from_rows(x: np.ndarray) -> MomentEstimate:
    mean = x.mean(axis=0)
    dev = x - mean
    cov = symmetrize(dev.T @ dev / (x.shape[0] - COVARIANCE_DDOF))
    return MomentEstimate(mean=mean, covariance=cov, estimator=SAMPLE, sample_size=x.shape[0])


def ledoit_wolf(panel: ReturnsPanel, window: WindowSpec, intensity: Optional[float] = None) -> MomentEstimate:
    return _ledoit_wolf_from_rows(_window_returns(panel, window), intensity)


def _ledoit_wolf_from_rows(x: np.ndarray, intensity: Optional[float] = None) -> MomentEstimate:
    t, n = x.shape
    mean = x.mean(axis=0)
    x = x - mean
    xmkt = x.mean(axis=1)

    sample = x.T @ x / t
    covmkt = x.T @ xmkt / t
    varmkt = float(xmkt @ xmkt / t)
    if varmkt <= 0.0:
        raise DegenerateSampleError("Proxy de mercado (média igual dos ativos) sem variância na janela")

    prior = np.outer(covmkt, covmkt) / varmkt
    np.fill_diagonal(prior, np.diag(sample))

    if intensity is None:
        intensity = _optimal_intensity(x, xmkt, sample, covmkt, varmkt, prior)
    delta = float(np.clip(intensity, 0.0, 1.0))
    cov = symmetrize(delta * prior + (1.0 - delta) * sample)
    return MomentEstimate(mean=mean, covariance=cov, estimator=LEDOIT_WOLF, sample_size=t, shrinkage=delta)


def _optimal_intensity(x, xmkt, sample, covmkt, varmkt, prior) -> float:
    t = x.shape[0]
    y = x ** 2
    phi_mat = y.T @ y / t - 2.0 * (x.T @ x) * sample / t + sample ** 2
    phi = phi_mat.sum()

    rdiag = (y ** 2).sum() / t - (np.diag(sample) ** 2).sum()
    z = x * xmkt[:, None]
    v1 = y.T @ z / t - covmkt[:, None] * sample
    roff1 = (v1 * covmkt[None, :]).sum() / varmkt - (np.diag(v1) * covmkt).sum() / varmkt
    v3 = z.T @ z / t - varmkt * sample
    roff3 = (v3 * np.outer(covmkt, covmkt)).sum() / varmkt ** 2 - (np.diag(v3) * covmkt ** 2).sum() / varmkt ** 2
    rho = rdiag + 2.0 * roff1 - roff3

    gamma = np.linalg.norm(sample - prior, "fro") ** 2
    if gamma == 0.0:
        # amostra já igual ao alvo
        return 0.0
    kappa = (phi - rho) / gamma
    return kappa / t


def estimate(panel: ReturnsPanel, window: WindowSpec, estimator: str = SAMPLE) -> MomentEstimate:
    if estimator == SAMPLE:
        return sample_moments(panel, window)
    if estimator == LEDOIT_WOLF:
        return ledoit_wolf(panel, window)
    raise PreconditionError(f"Estimador desconhecido: {estimator!r} (use {', '.join(ESTIMATORS)})")

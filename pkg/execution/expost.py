"""
Matemática ex-post do conjunto eficiente: constantes padrão e de conjunto
ativo, constantes β da covariância conjunta retorno/previsão, momentos
ex-post, fronteira ex-post pelo Método 0 (fórmula fechada, restrições ativas
como igualdades) e pelo Método 1 (simulação das previsões), teste de
consistência ex-post e CVaR normal.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.special import ndtr
from scipy.stats import norm

from density import BerkowitzOutcome, PitSeries, berkowitz, berkowitz_pvalue
from errors import DegenerateSampleError, DimensionError, DrawFailureError, PreconditionError, SolverError
from estimation import MomentEstimate
from optimizer import (
    LOWER,
    Frontier,
    Portfolio,
    max_return,
    min_variance,
    solve_qp,
    target_return_portfolio,
)
from randgen import SeededSource, mvn_draws

METHOD0 = "method0"
METHOD1 = "method1"
IID = "iid"
PREDICTIVE = "predictive"
FORECAST_MODES = (IID, PREDICTIVE)

BUDGET_ONLY = "budget-only"
ACTIVE_SET = "active-set"

DAYS_PER_WEEK = 5


@dataclass(frozen=True)
class EfficientSetConstants:
    alpha0: float
    alpha1: float
    alpha2: float
    variant: str
    w0: np.ndarray
    D0: np.ndarray
    p: int = 1


@dataclass(frozen=True)
class BetaConstants:
    beta0: float
    beta1: float
    beta2: float


@dataclass(frozen=True)
class ForecastCovarianceSpec:
    sigma_rr: np.ndarray
    sigma_rf: np.ndarray
    sigma_ff: np.ndarray
    delta: np.ndarray
    kappa: Optional[float] = None
    rho: Optional[float] = None

    @classmethod
    def exemplar(cls, sigma: np.ndarray, kappa: float, rho: float = 0.0, delta=None) -> "ForecastCovarianceSpec":
        """Γ com Σ_RF = ρ√κ·Σ e Σ_FF = κ·Σ."""
        if kappa <= 0.0:
            raise PreconditionError(f"κ deve ser > 0 (recebido {kappa})")
        if not -1.0 <= rho <= 1.0:
            raise PreconditionError(f"ρ deve estar em [-1, 1] (recebido {rho})")
        sigma = np.asarray(sigma, dtype=float)
        n = sigma.shape[0]
        return cls(
            sigma_rr=sigma,
            sigma_rf=rho * np.sqrt(kappa) * sigma,
            sigma_ff=kappa * sigma,
            delta=np.zeros(n) if delta is None else np.asarray(delta, dtype=float),
            kappa=kappa,
            rho=rho,
        )

    @classmethod
    def validation(cls, sigma: np.ndarray, mode: str, M: Optional[int] = None) -> "ForecastCovarianceSpec":
        """Previsões sem viés e sem covariância cruzada: κ = 1/M (iid) ou 1 (preditiva)."""
        if mode == PREDICTIVE:
            return cls.exemplar(sigma, 1.0)
        if mode == IID:
            if not M or M < 1:
                raise PreconditionError("Modo iid precisa do tamanho da amostra M")
            return cls.exemplar(sigma, 1.0 / M)
        raise PreconditionError(f"Modo de previsão desconhecido: {mode!r}")

    def composite(self) -> np.ndarray:
        return np.block([[self.sigma_rr, self.sigma_rf], [self.sigma_rf.T, self.sigma_ff]])


@dataclass(frozen=True)
class ExPostPoint:
    theta: float
    mu_pf: float
    var_pf: float
    method: str
    target_return: float = float("nan")
    exante_var: float = float("nan")
    draws: int = 0

    @property
    def sd_pf(self) -> float:
        return float(np.sqrt(self.var_pf))


@dataclass(frozen=True)
class FrontierEquation:
    A0: float
    A1: float
    B0: float
    B1: float

    def mu_at(self, var_pf) -> np.ndarray:
        var_pf = np.asarray(var_pf, dtype=float)
        if np.any(var_pf < self.B0):
            raise PreconditionError(f"Variância abaixo do mínimo ex-post B0={self.B0:.6g}")
        return self.A0 + (self.A1 / np.sqrt(self.B1)) * np.sqrt(var_pf - self.B0)


@dataclass(frozen=True)
class ExPostTestResult:
    b: int
    outcome: BerkowitzOutcome
    pvalue: float
    consistent: bool


@dataclass(frozen=True)
class FrontierComparison:
    b: int
    method: str
    vol_diff: float
    cvar_diff_bp: float
    origins: int


def _cho(sigma: np.ndarray):
    try:
        return linalg.cho_factor(np.asarray(sigma, dtype=float), lower=True)
    except linalg.LinAlgError as e:
        raise PreconditionError(f"Σ não é definida positiva: {e}") from e


def standard_constants(mu, sigma, active_set: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> EfficientSetConstants:
    """
    Sem active_set: α0 = μ'Σ⁻¹1/(1'Σ⁻¹1), α1 = μ'D0μ, α2 = 1/(1'Σ⁻¹1).
    Com active_set = (A_a, b_a), A_a N×p em colunas: w̃0 = Σ⁻¹A(A'Σ⁻¹A)⁻¹b,
    D̃0 = Σ⁻¹ - Σ⁻¹A(A'Σ⁻¹A)⁻¹A'Σ⁻¹ e as constantes α̃.
    """
    mu = np.asarray(mu, dtype=float)
    n = mu.shape[0]
    if sigma.shape != (n, n):
        raise DimensionError(f"Σ {sigma.shape} incompatível com μ de {n} ativos")
    factor = _cho(sigma)
    sigma_inv = linalg.cho_solve(factor, np.eye(n))
    sigma_inv = 0.5 * (sigma_inv + sigma_inv.T)

    if active_set is None:
        A = np.ones((n, 1))
        b = np.array([1.0])
        variant = BUDGET_ONLY
    else:
        A = np.asarray(active_set[0], dtype=float).reshape(n, -1)
        b = np.asarray(active_set[1], dtype=float).reshape(-1)
        if b.shape[0] != A.shape[1]:
            raise DimensionError(f"A_a com {A.shape[1]} colunas e b_a com {b.shape[0]} valores")
        if np.linalg.matrix_rank(A) < A.shape[1]:
            raise PreconditionError(f"A_a sem posto coluna completo ({A.shape[1]} restrições)")
        variant = ACTIVE_SET

    sia = sigma_inv @ A
    gram = A.T @ sia
    gram_inv = np.linalg.inv(gram)
    w0 = sia @ gram_inv @ b
    D0 = sigma_inv - sia @ gram_inv @ sia.T
    D0 = 0.5 * (D0 + D0.T)
    return EfficientSetConstants(
        alpha0=float(mu @ w0),
        alpha1=float(mu @ D0 @ mu),
        alpha2=float(b @ gram_inv @ b),
        variant=variant,
        w0=w0,
        D0=D0,
        p=A.shape[1],
    )


def beta_constants(constants: EfficientSetConstants, spec: ForecastCovarianceSpec, mu) -> BetaConstants:
    mu = np.asarray(mu, dtype=float)
    D = constants.D0
    n = mu.shape[0]
    for name, block in (("Σ_RR", spec.sigma_rr), ("Σ_RF", spec.sigma_rf), ("Σ_FF", spec.sigma_ff)):
        if block.shape != (n, n):
            raise DimensionError(f"{name} {block.shape} incompatível com {n} ativos")
    if spec.delta.shape != (n,):
        raise DimensionError(f"δ com {spec.delta.shape[0]} valores, esperado {n}")
    s_rr, s_rf, s_ff, delta = spec.sigma_rr, spec.sigma_rf, spec.sigma_ff, spec.delta
    s_fr = s_rf.T

    d_rf = D @ s_rf
    beta0 = float(np.trace(d_rf) + mu @ D @ delta)
    beta1 = float(mu @ D @ s_fr @ constants.w0)
    d_rr_d = D @ s_rr @ D
    beta2 = float(
        np.trace(d_rf @ d_rf + D @ s_ff @ D @ s_rr)
        + mu @ D @ s_ff @ D @ mu
        + delta @ d_rr_d @ delta
        + 2.0 * delta @ d_rr_d @ mu
        + 2.0 * mu @ D @ s_fr @ D @ (mu + delta)
    )
    return BetaConstants(beta0=beta0, beta1=beta1, beta2=beta2)


def expost_moments(constants: EfficientSetConstants, betas: BetaConstants, theta: float) -> ExPostPoint:
    if theta < 0.0:
        raise PreconditionError(f"θ deve ser >= 0 (recebido {theta})")
    a0, a1, a2 = constants.alpha0, constants.alpha1, constants.alpha2
    mu_pf = a0 + theta * a1 + theta * betas.beta0
    var_pf = a2 + theta ** 2 * a1 + 2.0 * theta * betas.beta1 + theta ** 2 * betas.beta2
    return ExPostPoint(
        theta=float(theta),
        mu_pf=float(mu_pf),
        var_pf=float(var_pf),
        method=METHOD0,
        target_return=float(a0 + theta * a1),
        exante_var=float(a2 + theta ** 2 * a1),
    )


def efficient_frontier_equation(constants: EfficientSetConstants, betas: BetaConstants) -> FrontierEquation:
    """μ_pf = A0 + (A1/√B1)·√(σ²_pf - B0)."""
    a1b2 = constants.alpha1 + betas.beta2
    if a1b2 <= 0.0:
        raise DegenerateSampleError("α1 + β2 = 0: fronteira ex-post degenerada")
    return FrontierEquation(
        A0=constants.alpha0 - betas.beta1 * (constants.alpha1 + betas.beta0) / a1b2,
        A1=constants.alpha1 + betas.beta0,
        B0=constants.alpha2 - betas.beta1 ** 2 / a1b2,
        B1=a1b2,
    )


def active_constraints(portfolio: Portfolio, n: int, U: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Orçamento mais um limite por restrição de caixa ativa na solução do QP.
    Limites linearmente dependentes dos anteriores (vértices) ficam de fora.
    """
    columns = [np.ones(n)]
    rhs = [1.0]
    for i, side in portfolio.active_bounds:
        e = np.zeros(n)
        e[i] = 1.0
        if np.linalg.matrix_rank(np.column_stack(columns + [e])) <= len(columns):
            continue
        columns.append(e)
        rhs.append(0.0 if side == LOWER else U)
    return np.column_stack(columns), np.array(rhs)


def recover_theta(constants: EfficientSetConstants, exante_var: float) -> float:
    """Inverte σ²_p = α̃2 + θ²α̃1."""
    excess = exante_var - constants.alpha2
    scale = max(abs(exante_var), 1e-300)
    if constants.alpha1 <= 1e-14 * max(1.0, abs(constants.alpha2)):
        if excess > 1e-9 * scale:
            raise DegenerateSampleError(
                f"α̃1 = 0 com σ²_p - α̃2 = {excess:.3g} > 0: θ irrecuperável (fronteira plana)"
            )
        return 0.0
    return float(np.sqrt(max(excess, 0.0) / constants.alpha1))


def expost_frontier_method0(
    moments: MomentEstimate, U: float, frontier: Frontier, mode: str = IID, M: Optional[int] = None
) -> List[ExPostPoint]:
    """
    Para cada ponto: constantes do conjunto ativo, θ pela identidade ex-ante e
    σ̃²_pf = σ²_p + κ·θ²{(n - p) + α̃1}, com κ = 1/M (iid) ou 1 (preditiva).
    É o β2 de Σ_FF = κΣ, ρ = 0, δ = 0 no conjunto ativo, onde tr(D̃0Σ) = n - p.
    """
    if mode not in FORECAST_MODES:
        raise PreconditionError(f"Modo de previsão desconhecido: {mode!r}")
    M = moments.sample_size if M is None else M
    n = moments.n_assets
    points = []
    for portfolio in frontier.points:
        consts = standard_constants(moments.mean, moments.covariance, active_constraints(portfolio, n, U))
        exante_var = portfolio.variance
        theta = recover_theta(consts, exante_var)
        kappa = 1.0 / M if mode == IID else 1.0
        inflation = kappa * theta ** 2 * ((n - consts.p) + consts.alpha1)
        points.append(
            ExPostPoint(
                theta=theta,
                mu_pf=portfolio.expected_return,
                var_pf=exante_var + inflation,
                method=METHOD0,
                target_return=portfolio.expected_return,
                exante_var=exante_var,
            )
        )
    return points


def _forecast_draws(mu, spec: ForecastCovarianceSpec, P: int, source: SeededSource) -> np.ndarray:
    mean = mu + spec.delta
    if not np.any(spec.sigma_ff):
        return np.tile(mean, (P, 1))
    return mvn_draws(mean, spec.sigma_ff, P, source)


def expost_frontier_method1(
    moments: MomentEstimate,
    U: float,
    targets: Sequence[float],
    P: int,
    seed: int,
    spec: Optional[ForecastCovarianceSpec] = None,
    stream: int = 0,
) -> List[ExPostPoint]:
    """
    Cada retorno alvo vira θ pelo ponto ex-ante da fronteira; para cada uma das
    P previsões F_i ~ N(μ + δ, Σ_FF) resolve min ½w'Σw - θF_i'w com orçamento e
    caixa. Com φ e Ω a média e a covariância dos pesos: E = φ'μ e
    var = φ'Σφ + μ'Ωμ + tr(ΣΩ).
    """
    if P < 2:
        raise PreconditionError(f"P deve ser >= 2 (recebido {P})")
    mu, sigma = moments.mean, moments.covariance
    n = mu.shape[0]
    spec = ForecastCovarianceSpec.validation(sigma, IID, moments.sample_size) if spec is None else spec
    draws = _forecast_draws(mu, spec, P, SeededSource(seed, stream))

    low = min_variance(moments, U)
    high = max_return(moments, U)
    E, e = np.ones((1, n)), np.array([1.0])
    start = np.full(n, 1.0 / n)
    points = []
    for target in targets:
        anchor = target_return_portfolio(moments, U, target, low, high)
        consts = standard_constants(mu, sigma, active_constraints(anchor, n, U))
        theta = recover_theta(consts, anchor.variance)
        weights = np.empty((P, n))
        for i in range(P):
            try:
                weights[i] = solve_qp(sigma, -theta * draws[i], E, e, U, start).weights
            except SolverError as ex:
                raise DrawFailureError(i, str(ex)) from ex
        phi = weights.mean(axis=0)
        omega = np.cov(weights, rowvar=False)
        var = float(phi @ spec.sigma_rr @ phi + mu @ omega @ mu + np.trace(spec.sigma_rr @ omega))
        points.append(
            ExPostPoint(
                theta=theta,
                mu_pf=float(phi @ mu),
                var_pf=var,
                method=METHOD1,
                target_return=float(target),
                exante_var=anchor.variance,
                draws=P,
            )
        )
    return points


def expost_consistency_test(
    realized: np.ndarray, mu_pf: np.ndarray, var_pf: np.ndarray, H: int, critical: float
) -> List[ExPostTestResult]:
    """
    Teste por ponto b da fronteira: PIT dos K retornos realizados de H períodos
    sob N(H·μ_pf, H·σ̃²_pf) e Berkowitz padrão. Matrizes K×B (origem × ponto).
    """
    realized = np.atleast_2d(np.asarray(realized, dtype=float))
    mu_pf = np.broadcast_to(np.asarray(mu_pf, dtype=float), realized.shape)
    var_pf = np.broadcast_to(np.asarray(var_pf, dtype=float), realized.shape)
    if np.any(var_pf <= 0.0):
        raise PreconditionError("σ̃²_pf <= 0 no teste ex-post")
    z = (realized - H * mu_pf) / np.sqrt(H * var_pf)
    p = np.clip(ndtr(z), np.finfo(float).tiny, np.nextafter(1.0, 0.0))
    results = []
    for b in range(realized.shape[1]):
        outcome = berkowitz(PitSeries.from_probabilities(p[:, b]))
        results.append(
            ExPostTestResult(
                b=b + 1,
                outcome=outcome,
                pvalue=berkowitz_pvalue(outcome),
                consistent=outcome.statistic < critical,
            )
        )
    return results


def cvar_normal(mean, stdev, alpha: float = 0.01, days_per_period: float = DAYS_PER_WEEK):
    """
    CVaR diário normal como perda positiva: -(μ_d - σ_d·φ(z_α)/α), com
    μ_d = mean/dias e σ_d = stdev/√dias.
    """
    if not 0.0 < alpha < 0.5:
        raise PreconditionError(f"α deve estar em (0, 0.5), recebido {alpha}")
    stdev = np.asarray(stdev, dtype=float)
    if np.any(stdev <= 0.0):
        raise PreconditionError("Desvio-padrão deve ser > 0 no CVaR")
    mu_d = np.asarray(mean, dtype=float) / days_per_period
    sd_d = stdev / np.sqrt(days_per_period)
    out = -(mu_d - sd_d * norm.pdf(norm.ppf(alpha)) / alpha)
    return float(out) if np.ndim(out) == 0 else out


def compare_frontiers(
    consistency_points: Sequence[Dict[int, Tuple[float, float]]],
    expost_points: Dict[str, Sequence[Sequence[ExPostPoint]]],
    B: int,
    alpha: float = 0.01,
) -> List[FrontierComparison]:
    """
    Por origem, `consistency_points[k]` mapeia b -> (retorno, volatilidade) da
    fronteira de consistência; `expost_points[método][k]` é a fronteira ex-post
    da mesma origem. A volatilidade ex-post no mesmo retorno esperado sai por
    interpolação linear em μ_pf. Médias sobre as origens onde b existe;
    vol_diff e cvar_diff_bp ficam NaN quando b nunca é consistente.
    """
    rows = []
    for method, per_origin in expost_points.items():
        if len(per_origin) != len(consistency_points):
            raise DimensionError(
                f"{len(per_origin)} fronteiras ex-post para {len(consistency_points)} origens ({method})"
            )
        for b in range(1, B + 1):
            vol_diffs, cvar_diffs = [], []
            for cf, ef in zip(consistency_points, per_origin):
                if b not in cf:
                    continue
                r_cf, sd_cf = cf[b]
                mus = np.array([pt.mu_pf for pt in ef])
                sds = np.array([pt.sd_pf for pt in ef])
                order = np.argsort(mus, kind="stable")
                sd_ef = float(np.interp(r_cf, mus[order], sds[order]))
                vol_diffs.append(sd_cf - sd_ef)
                cvar_diffs.append(1e4 * (cvar_normal(r_cf, sd_cf, alpha) - cvar_normal(r_cf, sd_ef, alpha)))
            rows.append(
                FrontierComparison(
                    b=b,
                    method=method,
                    vol_diff=float(np.mean(vol_diffs)) if vol_diffs else float("nan"),
                    cvar_diff_bp=float(np.mean(cvar_diffs)) if cvar_diffs else float("nan"),
                    origins=len(vol_diffs),
                )
            )
    return rows

"""
Programas de carteira com orçamento e limites 0 <= w_i <= U:
variância mínima, retorno máximo, fronteira eficiente em B níveis,
carteiras aleatórias viáveis e a carteira de grade (mínima variância dos
pesos com retorno e volatilidade alvo).
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from errors import (
    DegenerateSampleError,
    DimensionError,
    FrontierError,
    InfeasibleBoundError,
    NonSPDCovarianceError,
    PreconditionError,
    SamplerExhaustedError,
    SolverError,
)
from estimation import MomentEstimate
from randgen import SeededSource

FRONTIER = "frontier"
GRID = "grid"
RANDOM = "random"
FALLBACK = "fallback"

KKT_TOL = 1e-9
STEP_TOL = 1e-10
DIRECTION_TOL = 1e-14
BUDGET_TOL = 1e-8
BOX_TOL = 1e-10
RETURN_TOL = 1e-8

SQP_MAXITER = 200
SQP_CONSTRAINT_TOL = 1e-7

SAMPLER_SWEEPS = 50
SAMPLER_MAX_BATCHES = 1000

LOWER = "lower"
UPPER = "upper"


@dataclass(frozen=True)
class Portfolio:
    weights: np.ndarray
    expected_return: float
    stdev: float
    provenance: str
    active_bounds: Tuple[Tuple[int, str], ...] = field(default=())

    @classmethod
    def from_weights(cls, weights, moments: MomentEstimate, provenance: str, active_bounds=()) -> "Portfolio":
        weights = np.asarray(weights, dtype=float)
        variance = float(weights @ moments.covariance @ weights)
        return cls(
            weights=weights,
            expected_return=float(moments.mean @ weights),
            stdev=float(np.sqrt(max(variance, 0.0))),
            provenance=provenance,
            active_bounds=tuple(active_bounds),
        )

    @property
    def variance(self) -> float:
        return self.stdev ** 2


@dataclass(frozen=True)
class Frontier:
    points: Tuple[Portfolio, ...]

    @property
    def min_var(self) -> Portfolio:
        return self.points[0]

    @property
    def max_ret(self) -> Portfolio:
        return self.points[-1]

    @property
    def returns(self) -> np.ndarray:
        return np.array([p.expected_return for p in self.points])

    @property
    def stdevs(self) -> np.ndarray:
        return np.array([p.stdev for p in self.points])

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class QpSolution:
    weights: np.ndarray
    multipliers: np.ndarray
    active_bounds: Tuple[Tuple[int, str], ...]
    iterations: int


@dataclass(frozen=True)
class FeasibilityReport:
    budget: float
    box: float
    target: float

    def ok(self) -> bool:
        return self.budget <= BUDGET_TOL and self.box <= BOX_TOL and self.target <= RETURN_TOL


def check_feasibility(weights, U: float, mean=None, target_return: Optional[float] = None) -> FeasibilityReport:
    """Resíduos de orçamento, caixa e retorno alvo, sem passar pelo solver."""
    w = np.asarray(weights, dtype=float)
    budget = abs(float(np.sum(w)) - 1.0)
    box = float(max(0.0, -np.min(w), np.max(w) - U))
    target = 0.0
    if mean is not None and target_return is not None:
        target = abs(float(np.dot(mean, w)) - target_return)
    return FeasibilityReport(budget=budget, box=box, target=target)


def _require_bounds(n: int, U: float) -> None:
    if not 0.0 < U <= 1.0:
        raise PreconditionError(f"U deve estar em (0, 1], recebido {U}")
    if n * U < 1.0 - 1e-12:
        raise InfeasibleBoundError(f"Limite inviável: N·U = {n}·{U} = {n * U:.4f} < 1")


def _require_spd(cov: np.ndarray) -> None:
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as e:
        raise NonSPDCovarianceError("Covariância não é definida positiva (use MomentEstimate.repaired())") from e


def solve_qp(
    Q: np.ndarray,
    c: np.ndarray,
    E: np.ndarray,
    e: np.ndarray,
    U: float,
    start: np.ndarray,
    max_iter: Optional[int] = None,
) -> QpSolution:
    """
    Método primal de conjunto ativo para

        min ½ wᵀQw + cᵀw   s.a.  E w = e,  0 <= w <= U

    partindo de um ponto viável. O conjunto de trabalho guarda só limites;
    restrições de bloqueio e de saída seguem a regra de Bland (menor índice,
    limite inferior i -> i, superior i -> N + i).
    """
    n = Q.shape[0]
    w = np.array(start, dtype=float)
    m = E.shape[0]
    if max_iter is None:
        max_iter = 50 * (n + m) + 100

    working: List[int] = []
    for it in range(max_iter):
        fixed = np.zeros(n, dtype=bool)
        for idx in working:
            fixed[idx % n] = True
        free = np.flatnonzero(~fixed)
        g = Q @ w + c

        nf = free.size
        kkt = np.zeros((nf + m, nf + m))
        kkt[:nf, :nf] = Q[np.ix_(free, free)]
        kkt[:nf, nf:] = E[:, free].T
        kkt[nf:, :nf] = E[:, free]
        rhs = np.concatenate([-g[free], np.zeros(m)])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError as ex:
            raise SolverError(f"Sistema KKT singular na iteração {it}: {ex}") from ex
        p = np.zeros(n)
        p[free] = sol[:nf]
        lam = sol[nf:]

        if np.max(np.abs(p), initial=0.0) < STEP_TOL:
            # multiplicadores dos limites no conjunto de trabalho
            r = g + E.T @ lam
            leaving = None
            for idx in sorted(working):
                i = idx % n
                mult = r[i] if idx < n else -r[i]
                if mult < -KKT_TOL:
                    leaving = idx
                    break
            if leaving is None:
                return QpSolution(
                    weights=w,
                    multipliers=lam,
                    active_bounds=tuple(
                        (idx % n, LOWER if idx < n else UPPER) for idx in sorted(working)
                    ),
                    iterations=it,
                )
            working.remove(leaving)
            continue

        alpha = 1.0
        blocking = None
        for i in free:
            if p[i] < -DIRECTION_TOL:
                step = -w[i] / p[i]
                idx = i
            elif p[i] > DIRECTION_TOL:
                step = (U - w[i]) / p[i]
                idx = n + i
            else:
                continue
            step = max(step, 0.0)
            if step < alpha or (step == alpha and blocking is not None and idx < blocking):
                alpha = step
                blocking = idx
        w = w + alpha * p
        if blocking is not None:
            working.append(blocking)
        for idx in working:
            w[idx % n] = 0.0 if idx < n else U

    raise SolverError(f"Conjunto ativo não convergiu em {max_iter} iterações")


def _budget_rows(n: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.ones((1, n)), np.array([1.0])


def _return_rows(mean: np.ndarray, target: float) -> Tuple[np.ndarray, np.ndarray]:
    return np.vstack([np.ones_like(mean), mean]), np.array([1.0, target])


def min_variance(moments: MomentEstimate, U: float) -> Portfolio:
    n = moments.n_assets
    _require_bounds(n, U)
    _require_spd(moments.covariance)
    E, e = _budget_rows(n)
    sol = solve_qp(moments.covariance, np.zeros(n), E, e, U, np.full(n, 1.0 / n))
    return Portfolio.from_weights(sol.weights, moments, FRONTIER, sol.active_bounds)


def max_return_weights(mean: np.ndarray, U: float) -> np.ndarray:
    """Preenchimento guloso em ordem decrescente de média; empate vai para o menor índice."""
    n = mean.shape[0]
    _require_bounds(n, U)
    order = np.argsort(-mean, kind="stable")
    w = np.zeros(n)
    remaining = 1.0
    for i in order:
        if remaining <= 0.0:
            break
        w[i] = min(U, remaining)
        remaining -= w[i]
    return w


def min_return_weights(mean: np.ndarray, U: float) -> np.ndarray:
    return max_return_weights(-mean, U)


def max_return(moments: MomentEstimate, U: float) -> Portfolio:
    return Portfolio.from_weights(max_return_weights(moments.mean, U), moments, FRONTIER)


def target_return_portfolio(
    moments: MomentEstimate, U: float, target: float, low: Portfolio, high: Portfolio
) -> Portfolio:
    """Ponto da fronteira com w'μ = target, partindo da combinação convexa de low e high."""
    span = high.expected_return - low.expected_return
    t = 0.0 if span == 0.0 else (target - low.expected_return) / span
    t = min(max(t, 0.0), 1.0)
    start = (1.0 - t) * low.weights + t * high.weights
    E, e = _return_rows(moments.mean, target)
    sol = solve_qp(moments.covariance, np.zeros(moments.n_assets), E, e, U, start)
    return Portfolio.from_weights(sol.weights, moments, FRONTIER, sol.active_bounds)


def frontier(moments: MomentEstimate, U: float, B: int) -> Frontier:
    if B < 2:
        raise PreconditionError(f"B deve ser >= 2 (recebido {B})")
    low = min_variance(moments, U)
    high = max_return(moments, U)
    r_min, r_max = low.expected_return, high.expected_return
    if r_max - r_min <= 1e-12 * max(1.0, abs(r_max)):
        raise DegenerateSampleError(
            f"Fronteira degenerada: retorno máximo {r_max:.6g} igual ao da variância mínima {r_min:.6g}"
        )
    levels = np.linspace(r_min, r_max, B)
    points = [low]
    for b in range(1, B):
        try:
            points.append(target_return_portfolio(moments, U, levels[b], low, high))
        except SolverError as e:
            raise FrontierError(b + 1, str(e)) from e
    return Frontier(points=tuple(points))


def _sampler_rows(mean: np.ndarray) -> np.ndarray:
    return np.vstack([np.ones_like(mean), mean])


def random_weight_matrix(
    moments: MomentEstimate, target_return: float, U: float, RP: int, source: SeededSource
) -> np.ndarray:
    """
    Matriz RP×N de pesos viáveis com w'μ = target_return: Dirichlet(1),
    projeção afim em {1'w = 1, μ'w = R}, e até 50 varreduras de corte em
    [0, U] seguido de projeção só nas variáveis livres.
    """
    mean = moments.mean
    n = mean.shape[0]
    _require_bounds(n, U)
    if RP < 1:
        raise PreconditionError(f"RP deve ser >= 1 (recebido {RP})")
    w_hi = max_return_weights(mean, U)
    w_lo = min_return_weights(mean, U)
    r_hi, r_lo = float(mean @ w_hi), float(mean @ w_lo)
    scale = max(1.0, abs(r_hi), abs(r_lo))
    if target_return > r_hi + RETURN_TOL * scale or target_return < r_lo - RETURN_TOL * scale:
        raise InfeasibleBoundError(
            f"Retorno alvo {target_return:.6g} fora do intervalo atingível [{r_lo:.6g}, {r_hi:.6g}]"
        )
    if abs(target_return - r_hi) <= RETURN_TOL:
        return np.tile(w_hi, (RP, 1))
    if abs(target_return - r_lo) <= RETURN_TOL:
        return np.tile(w_lo, (RP, 1))

    A = _sampler_rows(mean)
    a = np.array([1.0, target_return])
    full_proj = A.T @ np.linalg.pinv(A @ A.T)
    rng = source.generator()

    accepted = []
    count = 0
    for _ in range(SAMPLER_MAX_BATCHES):
        w = rng.dirichlet(np.ones(n), size=RP)
        w = w - (w @ A.T - a) @ full_proj.T
        for _ in range(SAMPLER_SWEEPS):
            np.clip(w, 0.0, U, out=w)
            resid = w @ A.T - a
            if np.max(np.abs(resid)) < RETURN_TOL * 1e-2:
                break
            free = (w > 0.0) & (w < U)
            rows = A[None, :, :] * free[:, None, :]
            gram_inv = np.linalg.pinv(rows @ rows.transpose(0, 2, 1))
            y = np.einsum("kab,kb->ka", gram_inv, resid)
            w = w - np.einsum("kan,ka->kn", rows, y)
        np.clip(w, 0.0, U, out=w)
        resid = np.max(np.abs(w @ A.T - a), axis=1)
        good = w[resid < RETURN_TOL]
        take = min(RP - count, good.shape[0])
        if take:
            accepted.append(good[:take])
            count += take
        if count == RP:
            return np.vstack(accepted)
    raise SamplerExhaustedError(
        f"Amostrador de carteiras rejeitou mais de 99,9% em {SAMPLER_MAX_BATCHES * RP} tentativas "
        f"(retorno alvo {target_return:.6g} praticamente num vértice)"
    )


def random_portfolios(
    moments: MomentEstimate, target_return: float, U: float, RP: int, seed: int, stream: int = 0
) -> List[Portfolio]:
    weights = random_weight_matrix(moments, target_return, U, RP, SeededSource(seed, stream))
    return [Portfolio.from_weights(w, moments, RANDOM) for w in weights]


def weight_variance(weights) -> float:
    w = np.asarray(weights, dtype=float)
    n = w.shape[-1]
    return float(np.sum((w - 1.0 / n) ** 2) / n)


def grid_portfolio(
    moments: MomentEstimate,
    target_return: float,
    target_sd: float,
    U: float,
    start: Portfolio,
) -> Portfolio:
    """
    Menor variância cross-section dos pesos com orçamento, caixa, retorno
    alvo e w'Σw = target_sd², por SQP (SLSQP) a partir de `start`. Sem
    convergência, com resíduo acima da tolerância ou sem melhorar o ponto
    inicial, devolve `start` marcado como fallback.
    """
    mean, cov = moments.mean, moments.covariance
    n = mean.shape[0]
    if start.weights.shape[0] != n:
        raise DimensionError(f"Carteira inicial com {start.weights.shape[0]} ativos, momentos com {n}")
    fallback = Portfolio.from_weights(start.weights, moments, FALLBACK)
    if target_sd <= 0.0:
        return fallback

    mu_scale = max(float(np.max(np.abs(mean))), 1e-12)
    var_target = target_sd ** 2

    def objective(w):
        d = w - 1.0 / n
        return float(d @ d) / n

    def objective_grad(w):
        return 2.0 * (w - 1.0 / n) / n

    constraints = [
        {"type": "eq", "fun": lambda w: np.sum(w) - 1.0, "jac": lambda w: np.ones(n)},
        {"type": "eq", "fun": lambda w: (mean @ w - target_return) / mu_scale, "jac": lambda w: mean / mu_scale},
        {"type": "eq", "fun": lambda w: (w @ cov @ w - var_target) / var_target,
         "jac": lambda w: 2.0 * (cov @ w) / var_target},
    ]
    try:
        result = minimize(
            objective,
            start.weights.copy(),
            jac=objective_grad,
            method="SLSQP",
            bounds=[(0.0, U)] * n,
            constraints=constraints,
            options={"maxiter": SQP_MAXITER, "ftol": 1e-12},
        )
    except (ValueError, FloatingPointError, np.linalg.LinAlgError):
        return fallback
    if not result.success or not np.all(np.isfinite(result.x)):
        return fallback

    w = np.clip(result.x, 0.0, U)
    report = check_feasibility(w, U, mean, target_return)
    if report.budget > BUDGET_TOL or report.target > RETURN_TOL:
        return fallback
    if abs(w @ cov @ w - var_target) / var_target > SQP_CONSTRAINT_TOL:
        return fallback
    if objective(w) > objective(start.weights):
        return fallback
    return Portfolio.from_weights(w, moments, GRID)


def nearest_portfolio(
    candidates: Sequence[Portfolio], target_return: float, target_sd: float, return_range: float, sd_range: float
) -> Portfolio:
    """Menor distância euclidiana em (retorno, volatilidade), cada eixo dividido pela sua amplitude na grade."""
    rs = np.array([p.expected_return for p in candidates])
    sds = np.array([p.stdev for p in candidates])
    rr = return_range if return_range > 0.0 else 1.0
    sr = sd_range if sd_range > 0.0 else 1.0
    dist = ((rs - target_return) / rr) ** 2 + ((sds - target_sd) / sr) ** 2
    return candidates[int(np.argmin(dist))]

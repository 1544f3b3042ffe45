"""
Calibração por Monte Carlo dos valores críticos de Berkowitz para (M, K, H, γ)
finitos e curva de poder para escalas da volatilidade fora da amostra.

Cada réplica gera uma série N(0,1) de M + K·H períodos com as origens da
linha do tempo de consistência: t_k = M - 1 + k·H, janela de M períodos até
t_k e retorno dos H períodos seguintes (sem sobreposição entre origens).
"""
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from density import berkowitz_many, empirical_cdf_many, pit_to_normal, summarize_many
from errors import CalibrationMissingError, PreconditionError, StructuralError
from market_data import horizon_returns
from randgen import SeededSource, standard_normals

PERCENTILES = (80, 85, 90, 95)
LEVEL_PERCENTILE = {0.20: 80, 0.15: 85, 0.10: 90, 0.05: 95}

CHI2_2_20PCT = 3.2189

TABLE_COLUMNS = ["M", "K", "gamma", "percentile", "critical_value", "reps", "repetitions", "seed", "H"]

# razão do percentil 80 simulado para χ²₂ a 20%, linhas M, colunas K (H = 4)
REFERENCE_M = (52, 78, 104, 130, 156, 182, 208, 234, 260, 286, 312, 338, 364, 390, 416)
REFERENCE_K = (26, 39, 52, 65, 78, 91, 104)
REFERENCE_RATIOS_80 = np.array([
    [0.78, 0.87, 0.99, 1.06, 1.22, 1.36, 1.54],
    [0.84, 0.79, 0.74, 0.83, 0.87, 0.93, 0.98],
    [0.84, 0.75, 0.74, 0.81, 0.78, 0.79, 0.84],
    [0.89, 0.81, 0.69, 0.67, 0.72, 0.69, 0.70],
    [0.96, 0.82, 0.71, 0.65, 0.61, 0.66, 0.63],
    [0.98, 0.88, 0.76, 0.69, 0.64, 0.58, 0.58],
    [1.00, 0.88, 0.77, 0.66, 0.63, 0.61, 0.56],
    [0.93, 0.85, 0.83, 0.69, 0.63, 0.62, 0.56],
    [0.94, 0.93, 0.86, 0.73, 0.71, 0.62, 0.57],
    [0.98, 0.93, 0.85, 0.82, 0.69, 0.62, 0.58],
    [0.96, 0.89, 0.86, 0.82, 0.73, 0.66, 0.61],
    [0.91, 0.90, 0.85, 0.82, 0.79, 0.70, 0.64],
    [1.02, 0.96, 0.93, 0.83, 0.83, 0.72, 0.67],
    [0.93, 0.93, 0.88, 0.88, 0.80, 0.77, 0.71],
    [0.91, 0.90, 0.89, 0.82, 0.81, 0.75, 0.73],
])

# réplicas por bloco vetorizado
CHUNK = 250


def gamma_key(gamma: float) -> float:
    return round(float(gamma), 6)


def level_percentile(level: float) -> int:
    for lv, pct in LEVEL_PERCENTILE.items():
        if abs(lv - level) < 1e-9:
            return pct
    raise PreconditionError(f"Nível de significância {level} não suportado (use 0.20, 0.15, 0.10 ou 0.05)")


def reference_ratio(M: int, K: int) -> Optional[float]:
    if M in REFERENCE_M and K in REFERENCE_K:
        return float(REFERENCE_RATIOS_80[REFERENCE_M.index(M), REFERENCE_K.index(K)])
    return None


@dataclass
class CriticalValueTable:
    entries: Dict[Tuple[int, int, float, int], float] = field(default_factory=dict)
    reps: int = 0
    repetitions: int = 0
    seed: int = 0
    H: int = 4

    def add(self, M: int, K: int, gamma: float, percentile: int, value: float) -> None:
        self.entries[(int(M), int(K), gamma_key(gamma), int(percentile))] = float(value)

    def merge(self, other: "CriticalValueTable") -> "CriticalValueTable":
        if self.entries and other.entries and self.H != other.H:
            raise PreconditionError(f"Tabelas com H diferentes ({self.H} e {other.H})")
        merged = CriticalValueTable(
            entries={**self.entries, **other.entries},
            reps=other.reps or self.reps,
            repetitions=other.repetitions or self.repetitions,
            seed=other.seed if other.entries else self.seed,
            H=other.H if other.entries else self.H,
        )
        return merged

    def gammas(self) -> List[float]:
        return sorted({k[2] for k in self.entries})

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class PowerPoint:
    level: float
    theta_scale: float
    rejection_rate: float
    critical_value: float


def _replication_statistics(M: int, K: int, H: int, gammas: Sequence[float], sources, theta_scale: float = 1.0):
    """Estatísticas (réplicas × γ) de um bloco de réplicas, uma fonte por réplica."""
    length = M + K * H
    n = M - H + 1
    x = np.stack([standard_normals(length, s) for s in sources])
    h = horizon_returns(x.T, H).T
    # janela da origem k: retornos de H períodos começando em k·H .. k·H + n - 1
    windows = np.lib.stride_tricks.sliding_window_view(h, n, axis=1)[:, ::H, :][:, :K, :]
    r_out = theta_scale * h[:, M + H * np.arange(K)]
    sorted_s, means, stdevs = summarize_many(windows)
    p = empirical_cdf_many(sorted_s, means, stdevs, r_out)
    y = pit_to_normal(p)
    out = np.empty((len(sources), len(gammas)))
    for j, g in enumerate(gammas):
        out[:, j] = berkowitz_many(y, g)[0]
    return out


def _chunk_task(args):
    M, K, H, gammas, seed, streams, theta_scale = args
    return _replication_statistics(M, K, H, gammas, [SeededSource(seed, s) for s in streams], theta_scale)


def _simulate(M, K, H, gammas, seed, streams, theta_scale=1.0, workers: int = 1) -> np.ndarray:
    tasks = [
        (M, K, H, tuple(gammas), seed, streams[i:i + CHUNK], theta_scale)
        for i in range(0, len(streams), CHUNK)
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk_task, tasks))
    else:
        parts = [_chunk_task(t) for t in tasks]
    return np.vstack(parts)


def _check_shape(M: int, K: int, H: int) -> None:
    if H < 1 or M < H + 1:
        raise PreconditionError(f"Precisa M > H >= 1 (M={M}, H={H})")
    if K < 2:
        raise PreconditionError(f"K deve ser >= 2 (recebido {K})")


def calibrate(
    M: int,
    K: int,
    H: int,
    gamma: Union[float, Iterable[float]],
    reps: int,
    repetitions: int,
    seed: int,
    workers: int = 1,
    min_reps: int = 1000,
) -> CriticalValueTable:
    """
    Percentis 80/85/90/95 da estatística sob a nula, média de `repetitions`
    rodadas de `reps` réplicas. Réplica r da rodada j usa o stream j·reps + r.
    """
    gammas = [float(gamma)] if np.isscalar(gamma) else [float(g) for g in gamma]
    _check_shape(M, K, H)
    if reps < min_reps:
        raise PreconditionError(f"reps deve ser >= {min_reps} (recebido {reps})")
    if repetitions < 1:
        raise PreconditionError(f"repetitions deve ser >= 1 (recebido {repetitions})")

    pct = np.zeros((len(gammas), len(PERCENTILES)))
    for j in range(repetitions):
        streams = list(range(j * reps, (j + 1) * reps))
        stats = _simulate(M, K, H, gammas, seed, streams, workers=workers)
        pct += np.percentile(stats, PERCENTILES, axis=0).T
    pct /= repetitions

    table = CriticalValueTable(reps=reps, repetitions=repetitions, seed=seed, H=H)
    for gi, g in enumerate(gammas):
        for pi, q in enumerate(PERCENTILES):
            table.add(M, K, g, q, pct[gi, pi])
    return table


def _bracket(values: List[int], x: int, axis: str) -> Tuple[int, int]:
    if x < values[0] or x > values[-1]:
        raise CalibrationMissingError(
            f"{axis}={x} fora da região calibrada [{values[0]}, {values[-1]}]; extrapolação recusada"
        )
    i = int(np.searchsorted(values, x))
    if values[i] == x:
        return x, x
    return values[i - 1], values[i]


def lookup(table: CriticalValueTable, M: int, K: int, gamma: float, level: float) -> float:
    """Valor exato se calibrado; senão interpolação bilinear em (M, K) dentro da grade."""
    pct = level_percentile(level)
    g = gamma_key(gamma)
    key = (int(M), int(K), g, pct)
    if key in table.entries:
        return table.entries[key]
    lattice = [(m, k) for (m, k, gg, q) in table.entries if gg == g and q == pct]
    if not lattice:
        raise CalibrationMissingError(f"γ={gamma} não calibrado para o percentil {pct}")
    ms = sorted({m for m, _ in lattice})
    ks = sorted({k for _, k in lattice})
    m0, m1 = _bracket(ms, M, "M")
    k0, k1 = _bracket(ks, K, "K")

    def corner(m, k):
        try:
            return table.entries[(m, k, g, pct)]
        except KeyError:
            raise CalibrationMissingError(f"Célula (M={m}, K={k}, γ={gamma}) ausente da tabela") from None

    tm = 0.0 if m1 == m0 else (M - m0) / (m1 - m0)
    tk = 0.0 if k1 == k0 else (K - k0) / (k1 - k0)
    return float(
        (1 - tm) * (1 - tk) * corner(m0, k0)
        + tm * (1 - tk) * corner(m1, k0)
        + (1 - tm) * tk * corner(m0, k1)
        + tm * tk * corner(m1, k1)
    )


def power_curve(
    M: int,
    K: int,
    theta_scales: Sequence[float],
    levels: Union[float, Sequence[float]],
    reps: int,
    seed: int,
    table: CriticalValueTable,
    H: Optional[int] = None,
    gamma: float = 1.0,
    workers: int = 1,
) -> List[PowerPoint]:
    """Taxa de rejeição por (nível, θ_scale) com o retorno fora da amostra escalado."""
    H = table.H if H is None else H
    if H != table.H:
        raise CalibrationMissingError(f"Tabela calibrada com H={table.H}, pedido H={H}")
    _check_shape(M, K, H)
    levels = [float(levels)] if np.isscalar(levels) else [float(lv) for lv in levels]
    criticals = {lv: lookup(table, M, K, gamma, lv) for lv in levels}
    for s in theta_scales:
        if s <= 0.0:
            raise PreconditionError(f"θ_scale deve ser > 0 (recebido {s})")

    points = []
    streams = list(range(reps))
    for s in theta_scales:
        stats = _simulate(M, K, H, [gamma], seed, streams, theta_scale=s, workers=workers)[:, 0]
        for lv in levels:
            rate = float(np.mean(stats > criticals[lv]))
            points.append(PowerPoint(level=lv, theta_scale=float(s), rejection_rate=rate, critical_value=criticals[lv]))
    return points


def write_table(table: CriticalValueTable, target, header: Optional[str] = None) -> None:
    rows = [
        {
            "M": m, "K": k, "gamma": repr(g), "percentile": q, "critical_value": repr(v),
            "reps": table.reps, "repetitions": table.repetitions, "seed": table.seed, "H": table.H,
        }
        for (m, k, g, q), v in sorted(table.entries.items())
    ]
    frame = pd.DataFrame(rows, columns=TABLE_COLUMNS)
    if isinstance(target, (str, bytes)) or hasattr(target, "__fspath__"):
        with open(target, "w", encoding="utf-8", newline="") as f:
            _emit(frame, f, header)
    else:
        _emit(frame, target, header)


def _emit(frame: pd.DataFrame, f, header: Optional[str]) -> None:
    if header:
        f.write(header.rstrip("\n") + "\n")
    frame.to_csv(f, index=False, lineterminator="\n")


def read_table(source) -> CriticalValueTable:
    if isinstance(source, bytes):
        source = io.BytesIO(source)
    try:
        frame = pd.read_csv(source, comment="#", float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise StructuralError(f"Tabela de valores críticos ilegível: {e}") from e
    missing = [c for c in TABLE_COLUMNS if c not in frame.columns]
    if missing:
        raise StructuralError(f"Tabela de valores críticos sem colunas: {', '.join(missing)}")
    if frame.empty:
        raise CalibrationMissingError("Tabela de valores críticos vazia")
    hs = frame["H"].unique()
    if len(hs) != 1:
        raise StructuralError(f"Tabela mistura valores de H: {sorted(hs)}")
    first = frame.iloc[0]
    table = CriticalValueTable(
        reps=int(first["reps"]), repetitions=int(first["repetitions"]), seed=int(first["seed"]), H=int(hs[0])
    )
    for row in frame.itertuples(index=False):
        table.add(row.M, row.K, row.gamma, row.percentile, row.critical_value)
    return table

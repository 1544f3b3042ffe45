"""
Configuração do workbench: arquivo plano KEY=value (formato .env), variáveis
WORKBENCH_* e flags da linha de comando.

Precedência: padrões < ambiente (WORKBENCH_*) < arquivo --config < flags.
"""
import hashlib
import os
from dataclasses import dataclass, fields, replace
from typing import Dict, Mapping, Optional, Tuple

from dotenv import dotenv_values, load_dotenv

from calibration import LEVEL_PERCENTILE
from errors import PreconditionError
from estimation import ESTIMATORS, SAMPLE
from expost import FORECAST_MODES, IID

ENV_PREFIX = "WORKBENCH_"
DEFAULT_TABLE = "critical_values.csv"


@dataclass(frozen=True)
class RunConfig:
    M: int = 312
    K: int = 39
    H: int = 4
    B: int = 11
    C: int = 50
    U: float = 0.33
    RP: int = 500
    gamma: Tuple[float, ...] = (1.0,)
    level: float = 0.20
    estimator: str = SAMPLE
    seed: int = 0
    input: str = ""
    out: str = "output"
    repetitions: int = 5
    reps: int = 20000
    p_draws: int = 10
    periods: int = 1440
    n_assets: int = 30
    strategy_a_all_cells: bool = False
    split: int = 200
    forecast_mode: str = IID
    table: str = ""
    workers: int = 1
    smoothing_window: int = 9
    m_grid: Tuple[int, ...] = (52, 104, 156, 208, 260, 312)
    k_grid: Tuple[int, ...] = (26, 39)
    power_scales: Tuple[float, ...] = ()
    overwrite: bool = False

    @property
    def table_path(self) -> str:
        return self.table or os.path.join(self.out, DEFAULT_TABLE)


# ordem fixa das chaves no arquivo
KEYS = tuple(f.name for f in fields(RunConfig))
_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _file_key(name: str) -> str:
    return name.upper()


def _parse_bool(key: str, raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "sim", "on"):
        return True
    if value in ("0", "false", "no", "nao", "não", "off", ""):
        return False
    raise PreconditionError(f"Valor booleano inválido para {key}: {raw!r}")


def parse_value(key: str, raw: str):
    """Converte o texto do arquivo/ambiente/flag para o tipo do campo."""
    kind = _TYPES[key]
    try:
        if kind is bool or kind == "bool":
            return _parse_bool(key, raw)
        if kind is int or kind == "int":
            return int(raw.strip())
        if kind is float or kind == "float":
            return float(raw.strip())
        if kind in (Tuple[int, ...], "Tuple[int, ...]"):
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if kind in (Tuple[float, ...], "Tuple[float, ...]"):
            return tuple(float(x) for x in raw.split(",") if x.strip())
    except ValueError as e:
        raise PreconditionError(f"Valor inválido para {key}: {raw!r}") from e
    return raw.strip()


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(format_value(v) for v in value)
    return str(value)


def from_mapping(values: Mapping[str, Optional[str]], source: str) -> Dict[str, object]:
    """Chaves KEY=value (maiúsculas ou não) para um dict de campos já tipados."""
    out = {}
    by_upper = {_file_key(k): k for k in KEYS}
    for raw_key, raw in values.items():
        key = by_upper.get(raw_key.strip().upper())
        if key is None:
            raise PreconditionError(f"Chave desconhecida em {source}: {raw_key}")
        if raw is None:
            continue
        out[key] = parse_value(key, raw)
    return out


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, object]:
    if environ is None:
        load_dotenv()
        environ = os.environ
    values = {}
    for key in KEYS:
        raw = environ.get(ENV_PREFIX + _file_key(key))
        if raw is not None:
            values[key] = raw
    return from_mapping(values, "ambiente")


def validate(config: RunConfig) -> RunConfig:
    if config.H < 1 or config.M <= config.H:
        raise PreconditionError(f"Precisa M > H >= 1 (M={config.M}, H={config.H})")
    if config.K < 2:
        raise PreconditionError(f"K deve ser >= 2 (K={config.K})")
    if config.B < 2 or config.C < 2:
        raise PreconditionError(f"B e C devem ser >= 2 (B={config.B}, C={config.C})")
    if not 0.0 < config.U <= 1.0:
        raise PreconditionError(f"U deve estar em (0, 1] (U={config.U})")
    if config.n_assets * config.U < 1.0:
        raise PreconditionError(f"N·U < 1: N={config.n_assets}, U={config.U} não admite orçamento")
    if not config.gamma:
        raise PreconditionError("Lista de γ vazia")
    for g in config.gamma:
        if not 0.0 < g <= 1.0:
            raise PreconditionError(f"γ deve estar em (0, 1] (γ={g})")
    if not any(abs(config.level - lv) < 1e-9 for lv in LEVEL_PERCENTILE):
        raise PreconditionError(f"Nível {config.level} não suportado (use 0.20, 0.15, 0.10 ou 0.05)")
    if config.estimator not in ESTIMATORS:
        raise PreconditionError(f"Estimador desconhecido: {config.estimator!r}")
    if config.forecast_mode not in FORECAST_MODES:
        raise PreconditionError(f"Modo de previsão desconhecido: {config.forecast_mode!r}")
    for name in ("RP", "reps", "repetitions", "workers", "n_assets"):
        if getattr(config, name) < 1:
            raise PreconditionError(f"{name} deve ser >= 1 ({getattr(config, name)})")
    if config.p_draws < 2:
        raise PreconditionError(f"p_draws deve ser >= 2 ({config.p_draws})")
    if config.split < 0:
        raise PreconditionError(f"split deve ser >= 0 ({config.split})")
    if config.smoothing_window < 1 or config.smoothing_window % 2 == 0:
        raise PreconditionError(f"Janela de suavização deve ser ímpar >= 1 ({config.smoothing_window})")
    if not config.m_grid or not config.k_grid:
        raise PreconditionError("m_grid e k_grid não podem ser vazios")
    return config


def build_config(
    cli: Optional[Mapping[str, object]] = None,
    config_path: Optional[str] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """Aplica as camadas na ordem de precedência e valida o resultado."""
    merged: Dict[str, object] = {}
    merged.update(env_overrides(environ))
    if config_path:
        merged.update(load_overrides(config_path))
    merged.update({k: v for k, v in (cli or {}).items() if v is not None})
    return validate(replace(RunConfig(), **merged))


def load_overrides(path: str) -> Dict[str, object]:
    if not os.path.exists(path):
        raise PreconditionError(f"Arquivo de configuração não encontrado: {path}")
    return from_mapping(dotenv_values(path), path)


def dumps(config: RunConfig) -> str:
    return "".join(f"{_file_key(k)}={format_value(getattr(config, k))}\n" for k in KEYS)


def save_config(config: RunConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(dumps(config))


def load_config(path: str) -> RunConfig:
    """Lê um arquivo gravado por save_config (chaves ausentes ficam no padrão)."""
    return validate(replace(RunConfig(), **load_overrides(path)))


def config_hash(config: RunConfig) -> str:
    """SHA-256 do texto serializado; `out` e `overwrite` não entram na proveniência."""
    return hashlib.sha256(dumps(replace(config, out="", overwrite=False)).encode("utf-8")).hexdigest()

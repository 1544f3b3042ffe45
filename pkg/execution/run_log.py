"""
Log de auditoria por comando (`<out>/<comando>_log.jsonl`) e linhas de status
no console.

Cada evento tem tipo, status, mensagem e meta; sem data/hora, para que o
arquivo seja idêntico entre execuções com a mesma configuração.
"""
import json
import os
import sys
from typing import Dict, List, Optional

SUCCESS = "success"
WARNING = "warning"
ERROR = "error"

# Configurar encoding para Windows
if sys.platform == "win32":
    try:
        import io
        sys.stdout = io.TextIOWrapper(sys.stdout.buffer, encoding="utf-8")
        sys.stderr = io.TextIOWrapper(sys.stderr.buffer, encoding="utf-8")
    except Exception:
        pass


def banner(title: str) -> None:
    print("=" * 60)
    print(title)
    print("=" * 60)


def ok(message: str, indent: int = 0) -> None:
    print(f"{' ' * indent}OK: {message}")


def warn(message: str, indent: int = 0) -> None:
    print(f"{' ' * indent}AVISO: {message}")


def fail(message: str, indent: int = 0) -> None:
    print(f"{' ' * indent}ERRO: {message}")


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "item"):
        return value.item()
    return value


class RunLog:
    """Eventos de um comando, gravados em JSON lines ao fechar."""

    def __init__(self, command: str, out_dir: str):
        self.command = command
        self.path = os.path.join(out_dir, f"{command}_log.jsonl")
        self.events: List[Dict] = []

    def log(self, status: str, mensagem: str, meta: Optional[Dict] = None) -> None:
        self.events.append({
            "tipo": self.command,
            "status": status,
            "mensagem": mensagem,
            "meta": _plain(meta or {}),
        })

    def success(self, mensagem: str, meta: Optional[Dict] = None) -> None:
        self.log(SUCCESS, mensagem, meta)

    def warning(self, mensagem: str, meta: Optional[Dict] = None) -> None:
        warn(mensagem, indent=3)
        self.log(WARNING, mensagem, meta)

    def error(self, mensagem: str, meta: Optional[Dict] = None) -> None:
        fail(mensagem, indent=3)
        self.log(ERROR, mensagem, meta)

    @property
    def error_count(self) -> int:
        return sum(1 for e in self.events if e["status"] == ERROR)

    def write(self) -> None:
        try:
            os.makedirs(os.path.dirname(self.path) or ".", exist_ok=True)
            with open(self.path, "w", encoding="utf-8", newline="") as f:
                for event in self.events:
                    f.write(json.dumps(event, ensure_ascii=False, sort_keys=True) + "\n")
        except OSError as e:
            print(f"Erro ao registrar log: {str(e)}")

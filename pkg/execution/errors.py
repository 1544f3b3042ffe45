"""
Exceções do workbench de carteiras consistentes.

PreconditionError sai com código 2 na linha de comando; o resto sai com 1.
"""


class WorkbenchError(Exception):
    """Base de todos os erros do workbench."""


class PreconditionError(WorkbenchError, ValueError):
    """Entrada ou configuração inválida (exit code 2)."""


class ParseError(PreconditionError):
    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"Valor não numérico na linha {row}, coluna '{column}': {value!r}")


class StructuralError(PreconditionError):
    pass


class OrderingError(PreconditionError):
    pass


class DimensionError(PreconditionError):
    pass


class InfeasibleBoundError(PreconditionError):
    pass


class NonSPDCovarianceError(PreconditionError):
    pass


class DegenerateSampleError(PreconditionError):
    pass


class CalibrationMissingError(PreconditionError):
    pass


class InsufficientHistoryError(PreconditionError):
    def __init__(self, required: int, available: int, what: str = "períodos"):
        self.required = required
        self.available = available
        super().__init__(
            f"Histórico insuficiente: são necessários {required} {what}, o painel tem {available}"
        )


class OutputExistsError(PreconditionError):
    pass


class SolverError(WorkbenchError):
    """Falha numérica interna (exit code 1)."""


class FrontierError(SolverError):
    def __init__(self, level: int, reason: str):
        self.level = level
        super().__init__(f"Falha no QP da fronteira no nível b={level}: {reason}")


class SamplerExhaustedError(SolverError):
    pass


class DrawFailureError(SolverError):
    def __init__(self, draw: int, reason: str):
        self.draw = draw
        super().__init__(f"Falha no QP do sorteio {draw}: {reason}")

"""
Иерархия исключений численной лаборатории
"""


class FlockLabError(Exception):
    """Базовое исключение лаборатории"""


class LabDomainError(FlockLabError, ValueError):
    """Аргумент вне области определения (отрицательное r, неположительные значения под логарифмом)"""


class LabConfigError(FlockLabError, ValueError):
    """Ошибка конфигурации эксперимента"""

    def __init__(self, message, missing_keys=None):
        super().__init__(message)
        self.missing_keys = sorted(missing_keys or [])


class GridShapeError(FlockLabError, ValueError):
    """Несогласованные сетки или размерности массивов"""


class OutOfGridError(FlockLabError, ValueError):
    """Запрос точки вне фазовой сетки"""


class ParticleIndexError(FlockLabError, IndexError):
    """Индекс частицы вне диапазона"""


class NumericalBlowupError(FlockLabError, ArithmeticError):
    """Нефинитное или неограниченно растущее состояние интегратора"""

    def __init__(self, message, step=None, replica=None):
        super().__init__(message)
        self.step = step
        self.replica = replica

    def __str__(self):
        base = super().__str__()
        details = []
        if self.replica is not None:
            details.append(f"replica={self.replica}")
        if self.step is not None:
            details.append(f"step={self.step}")
        return f"{base} ({', '.join(details)})" if details else base

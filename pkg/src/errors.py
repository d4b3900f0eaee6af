"""
Иерархия исключений и предупреждений predictive-lasso.
Все ошибки предметной области наследуются от PredLassoError,
чтобы циклы CV, Монте-Карло и скользящих окон могли отличать их от багов.
"""

from typing import Optional


class PredLassoError(Exception):
    """Базовая ошибка пакета."""


class DimensionMismatch(PredLassoError):
    """Несогласованные размеры входных массивов."""


class SingularDesign(PredLassoError):
    """Матрица Грама подвыборки столбцов вырождена (коллинеарные предикторы)."""


class MissingTruth(PredLassoError):
    """Оракульная оценка требует истинного активного множества (только симуляции)."""


class EmptyWindow(PredLassoError):
    """Пустое окно для прогноза RWwD."""


class LengthMismatch(PredLassoError):
    """Прогнозы и реализации разной или нулевой длины."""


class DomainError(PredLassoError):
    """Аргумент вне области определения (например, log log n <= 0)."""


class AllCandidatesFailed(PredLassoError):
    """Ни один кандидат c_lambda не был оценён без ошибок."""


class SeriesTooShort(PredLassoError):
    """Ряд короче горизонта или окна."""


class ConfigError(PredLassoError):
    """Ошибка в конфигурации запуска."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        prefix = []
        if line is not None:
            prefix.append(f"строка {line}")
        if field is not None:
            prefix.append(f"поле '{field}'")
        text = f"{', '.join(prefix)}: {message}" if prefix else message
        super().__init__(text)


class PanelError(PredLassoError):
    """Базовая ошибка загрузки панели доходностей."""


class MissingColumn(PanelError):
    """В CSV нет обязательного столбца."""

    def __init__(self, column: str):
        self.column = column
        super().__init__(f"отсутствует столбец: {column}")


class NonMonotoneDates(PanelError):
    """Даты не возрастают строго помесячно (повтор, обратный порядок или пропуск)."""

    def __init__(self, row: int, date: str):
        self.row = row
        self.date = date
        super().__init__(f"нарушен помесячный порядок дат в строке {row} ({date})")


class NonFiniteValue(PanelError):
    """Нечисловое или бесконечное значение в панели."""

    def __init__(self, column: str, row: int):
        self.column = column
        self.row = row
        super().__init__(f"нечисловое значение в столбце {column}, строка {row}")


class NonConvergence(UserWarning):
    """Координатный спуск не сошёлся за max_iter проходов."""


class ConstantColumn(UserWarning):
    """Столбец с нулевым стандартным отклонением: коэффициент не штрафуется."""

import pandas as pd


class PandasUtils:
    @staticmethod
    def is_not_empty(cell) -> bool:
        if isinstance(cell, pd.Series):
            return bool(pd.notna(cell).any())
        return bool(pd.notna(cell))

    @staticmethod
    def as_string(cell) -> str:
        return str(cell).strip() if pd.notna(cell) else ''

    @staticmethod
    def as_float(cell, column: str, row_number: int) -> float:
        """Convert a cell to float; the error names the column and the 1-based data row."""
        try:
            value = float(cell)
        except (TypeError, ValueError):
            raise ValueError(f"Column '{column}', row {row_number}: not a number: {cell!r}")
        return value

    @staticmethod
    def as_int(cell, column: str, row_number: int) -> int:
        value = PandasUtils.as_float(cell, column, row_number)
        if not value.is_integer():
            raise ValueError(f"Column '{column}', row {row_number}: expected an integer level, got {cell!r}")
        return int(value)

    @staticmethod
    def column_problems(frame: pd.DataFrame, required: list[str], optional: list[str]) -> list[str]:
        """List schema problems: missing required columns, then unexpected columns."""
        columns = [str(c) for c in frame.columns]
        problems = [f"missing column '{name}'" for name in required if name not in columns]
        problems += [f"unexpected column '{name}'" for name in columns if name not in required and name not in optional]
        return problems

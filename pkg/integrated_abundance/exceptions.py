"""Custom exceptions for the integrated abundance library."""

from typing import Optional, Sequence, Tuple


class AbundanceException(Exception):
    """Base exception for all integrated abundance errors."""
    pass


class DatasetError(AbundanceException):
    """
    Raised when survey data violates a dataset invariant.

    The optional location fields are rendered into the message so that a
    failure can always be traced to a data block cell or to a file row.
    """

    def __init__(
        self,
        message: str,
        block: Optional[str] = None,
        cell: Optional[Tuple[int, ...]] = None,
        file: Optional[str] = None,
        row: Optional[int] = None,
        field: Optional[str] = None,
    ):
        self.reason = message
        self.block = block
        self.cell = cell
        self.file = file
        self.row = row
        self.field = field
        super().__init__(self._render())

    def _render(self) -> str:
        where = []
        if self.file is not None:
            where.append(f"file={self.file}")
        if self.row is not None:
            where.append(f"row={self.row}")
        if self.field is not None:
            where.append(f"field={self.field}")
        if self.block is not None and self.file is None:
            where.append(f"block={self.block}")
        if self.cell is not None and self.row is None:
            where.append(f"cell={tuple(int(i) for i in self.cell)}")
        if not where:
            return self.reason
        return f"{self.reason} ({', '.join(where)})"

    def located(
        self, file: str, row: Optional[int] = None, field: Optional[str] = None
    ) -> "DatasetError":
        """Return a copy of this error pinned to a file location."""
        return DatasetError(
            self.reason,
            block=self.block,
            cell=self.cell,
            file=file,
            row=row,
            field=field or self.field,
        )


class ConfigurationError(AbundanceException):
    """Raised when a scenario, sampler or CLI configuration is invalid."""

    @classmethod
    def from_validation(cls, error, source: Optional[str] = None) -> "ConfigurationError":
        """
        Translate a pydantic ValidationError, naming every offending field.

        Args:
            error: pydantic ValidationError
            source: Optional config file or object name for the message
        """
        problems = []
        for item in error.errors():
            field = ".".join(str(part) for part in item.get("loc", ())) or "config"
            message = str(item.get("msg", "invalid value")).removeprefix("Value error, ")
            problems.append(f"{field}: {message}")
        prefix = f"invalid configuration in {source}" if source else "invalid configuration"
        return cls(f"{prefix}: {'; '.join(problems)}")


class InitializationError(AbundanceException):
    """Raised when no finite-density starting state can be found."""

    def __init__(self, message: str, components: Sequence[str] = ()):
        self.components = tuple(components)
        if self.components:
            message = f"{message} (violated: {', '.join(self.components)})"
        super().__init__(message)


class DiagnosticsError(AbundanceException):
    """Raised when a diagnostic is requested on unusable draws."""
    pass


class ConvergenceError(AbundanceException):
    """Raised when a fit is required to converge and did not."""
    pass


class StorageError(AbundanceException):
    """Raised when reading or writing result files fails."""
    pass

"""Exception types shared across the package."""


class AnnoknockError(Exception):
    """Base class for all errors raised by this package."""


class NonFiniteInput(AnnoknockError):
    """An input array contains NaN or infinite entries."""


class ZeroVarianceColumn(AnnoknockError):
    """A column is constant and cannot be standardized."""

    def __init__(self, column, name=None):
        self.column = column
        self.name = name
        label = f"'{name}' (index {column})" if name is not None else f"index {column}"
        super().__init__(f"column {label} has zero sample variance")


class ParseError(AnnoknockError):
    """A file does not parse under its declared format."""

    def __init__(self, reason, line=None):
        self.line = line
        self.reason = reason
        msg = reason if line is None else f"line {line}: {reason}"
        super().__init__(msg)


class DimensionMismatch(AnnoknockError):
    """Two inputs that must agree in size do not."""

    def __init__(self, what, expected, got):
        self.expected = expected
        self.got = got
        super().__init__(f"{what}: expected {expected}, got {got}")


class DuplicateSnpId(AnnoknockError):
    """A SNP identifier appears more than once."""


class NotPositiveDefinite(AnnoknockError):
    """A matrix required to be positive (semi)definite is not."""


class InvalidQ(AnnoknockError):
    """Target FDR level outside (0, 1)."""


class NonFiniteObjective(AnnoknockError):
    """A solver update produced a non-finite value."""


class DegenerateCV(AnnoknockError):
    """A cross-validation fold has fewer than two samples."""


class ConfigError(AnnoknockError):
    """A configuration file or flag set is invalid."""

    def __init__(self, key, reason):
        self.key = key
        super().__init__(f"config key '{key}': {reason}")

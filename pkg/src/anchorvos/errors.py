"""Exception types shared across the toolkit.

Every error that the command line maps to a data/format failure derives from
``DataError``; usage-level problems derive from ``UsageError``.
"""


class AnchorVosError(Exception):
    pass


class DataError(AnchorVosError):
    """Bad or inconsistent input data (exit code 2 at the CLI)."""


class UsageError(AnchorVosError):
    """Invalid request or configuration (exit code 1 at the CLI)."""


class CountsMismatch(DataError, ValueError):
    pass


class DimensionMismatch(DataError, ValueError):
    pass


class EmptyMask(DataError, ValueError):
    pass


class ParseError(DataError, ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")


class MissingEmbedding(DataError, KeyError):
    def __init__(self, frame: int, instance_id: str):
        self.frame = frame
        self.instance_id = instance_id
        super().__init__(f"no embedding for frame={frame} id={instance_id!r}")

    def __str__(self) -> str:
        return self.args[0]


class DuplicateFrame(DataError, ValueError):
    pass


class LengthMismatch(DataError, ValueError):
    pass


class ScheduleMismatch(DataError, ValueError):
    pass


class EmptyDataset(DataError, ValueError):
    pass


class InvalidScenario(UsageError, ValueError):
    pass


class UnknownFamily(UsageError, ValueError):
    pass


class ConfigError(UsageError, ValueError):
    pass

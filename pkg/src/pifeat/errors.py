"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures to distinct
process exit statuses.
"""

from __future__ import annotations


class PifeatError(Exception):
    exit_code = 1


class ConfigError(PifeatError, ValueError):
    exit_code = 2


class IoError(PifeatError, OSError):
    exit_code = 3


class ParseError(PifeatError, ValueError):
    exit_code = 4

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class NotSkewSymmetric(PifeatError, ValueError):
    exit_code = 10


class InvalidRotation(PifeatError, ValueError):
    exit_code = 11


class EmptyWindow(PifeatError, ValueError):
    exit_code = 20


class NonMonotonicTimestamps(PifeatError, ValueError):
    exit_code = 21


class NonUniformTimestamps(PifeatError, ValueError):
    exit_code = 22


class RemainderPolicyViolation(PifeatError, ValueError):
    exit_code = 23


class AlignmentError(PifeatError, ValueError):
    exit_code = 30


class InsufficientSamples(PifeatError, ValueError):
    exit_code = 31


class UnknownDataset(PifeatError, LookupError):
    exit_code = 32


class ShapeMismatch(PifeatError, ValueError):
    exit_code = 40


class ArchitectureMismatch(PifeatError, ValueError):
    exit_code = 41


class LengthMismatch(PifeatError, ValueError):
    exit_code = 50


class NearCutLocus(PifeatError, ValueError):
    exit_code = 51


class DegenerateBatch(PifeatError, ValueError):
    exit_code = 52


class TrajectoryTooShort(PifeatError, ValueError):
    exit_code = 53


class TimestampJitter(UserWarning):
    """Sample spacing deviates from the nominal period by more than 10%."""

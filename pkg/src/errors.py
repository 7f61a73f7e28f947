"""Exception hierarchy for the biometric key-binding toolkit."""
from typing import Optional, Tuple


class BiokeyError(Exception):
    """Base class for every error raised by the toolkit"""


class ArgumentError(BiokeyError, ValueError):
    """An argument violates an operation's contract"""


class ValidationError(BiokeyError, ValueError):
    """A loaded or constructed object violates its invariants"""


class ParseError(BiokeyError):
    """A file could not be parsed"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class VersionError(ParseError):
    """A versioned file carries an unsupported version"""


class RankDeficiencyError(BiokeyError):
    """Parity-check matrix is not of full row rank over GF(2)"""

    def __init__(self, rank: int, rows: int):
        self.rank = rank
        self.rows = rows
        super().__init__(f"parity-check matrix has GF(2) rank {rank} < {rows} rows")


class TrainingError(BiokeyError):
    """Decoder training diverged"""

    def __init__(self, message: str, layer: int):
        self.layer = layer
        super().__init__(f"layer {layer}: {message}")


class FitError(BiokeyError):
    """Quantizer could not be fitted on the calibration data"""

    def __init__(self, message: str, dimension: int):
        self.dimension = dimension
        super().__init__(f"dimension {dimension}: {message}")


class UnreachableTauError(BiokeyError):
    """No masking rate satisfies the requested inter-class distance threshold"""

    def __init__(self, tau: float, achievable: Tuple[float, float]):
        self.tau = tau
        self.achievable = achievable
        super().__init__(
            f"tau={tau:.4f} is unreachable; achievable range is "
            f"[{achievable[0]:.4f}, {achievable[1]:.4f}]"
        )


class MetadataMismatchError(BiokeyError):
    """Probe template or codec does not match the commitment's metadata"""


class UndefinedResultError(BiokeyError, ArithmeticError):
    """A statistic is undefined for the given inputs"""


class EntropyError(BiokeyError):
    """The entropy source failed to deliver key material"""

"""Exception hierarchy shared by every module.

CLI exit codes: format 2, protocol 3, numeric 4.
"""


class CorrDiffError(Exception):
    exit_code = 1


class ConfigurationError(CorrDiffError, ValueError):
    exit_code = 2


class DimensionError(CorrDiffError, ValueError):
    exit_code = 2


class FormatError(CorrDiffError, ValueError):
    """Unreadable or malformed input files (tensor files, CSV curves)."""

    exit_code = 2


class NumericError(CorrDiffError, ArithmeticError):
    exit_code = 4


class ProtocolError(CorrDiffError):
    exit_code = 3


class BadMagicError(ProtocolError):
    pass


class VersionError(ProtocolError):
    pass


class ChecksumError(ProtocolError):
    pass


class TruncationError(ProtocolError):
    pass

"""Exception hierarchy shared by every module.

CLI exit-code mapping: ConfigError -> 1, DataError and subclasses -> 2,
BridgeError and subclasses -> 3.
"""


class ToolError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ToolError):
    """Invalid configuration, CLI usage, or run parameters."""


class DataError(ToolError):
    """Input data violates a documented contract."""


class ParseError(DataError):
    """Malformed input file; the message carries a line or locator."""


class IntegrityError(DataError):
    """Structurally valid input that breaks a cross-record invariant."""


class DomainError(DataError):
    """Operation invoked outside its mathematical domain."""


class BridgeError(ToolError):
    """External simplifier failure (transport, child process, or protocol)."""


class ProtocolError(BridgeError):
    """Wire-protocol violation, e.g. an output line-count mismatch."""

"""Exception hierarchy shared by every module."""

from __future__ import annotations


class RapidError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(RapidError, ValueError):
    """An input violated a documented precondition."""


class SequencingError(ContractError):
    """Samples arrived out of order or with a gap in step indices."""


class TimingError(ContractError):
    """Timestamps do not advance, or advance by an implausible interval."""


class DimensionError(ContractError):
    """Vector lengths disagree."""


class ConfigError(ContractError):
    """A configuration value is missing or out of range."""


class ProtocolError(RapidError):
    """A wire frame could not be decoded."""


class VersionMismatch(ProtocolError):
    """The peer speaks a different protocol version."""


class CloudTimeout(RapidError):
    """The cloud did not answer within the timeout, even after a retry."""


class AccountingError(RapidError):
    """Per-tick records were submitted out of order."""


class ComparisonError(RapidError):
    """Reports from different scenarios cannot be compared."""

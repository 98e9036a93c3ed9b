"""Exception hierarchy shared across the package.

Every error carries an ``exit_code`` so the CLI can map failures onto its
documented process exit codes (0 ok, 2 config, 3 backend, 4 incomplete
fixture, 5 empty probing set).
"""

from __future__ import annotations


class OrderProbeError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(OrderProbeError):
    """Invalid experiment configuration or artifact conflict."""

    exit_code = 2


class DatasetError(OrderProbeError):
    """Malformed or unusable dataset input."""

    exit_code = 2


class TemplateError(OrderProbeError):
    """Template definition or rendering problem."""

    exit_code = 2


class BackendError(OrderProbeError):
    """Language-model backend failure (network, protocol, overflow)."""

    exit_code = 3


class ContextOverflowError(BackendError):
    """Request would exceed the backend's context window."""


class FixtureIncompleteError(BackendError):
    """Replay cache is missing an entry required by the run."""

    exit_code = 4


class EmptyProbingSetError(OrderProbeError):
    """No probe could be extracted from any candidate generation."""

    exit_code = 5

"""Exception taxonomy shared across the library and the CLI.

Exit-code mapping used by the CLI: configuration problems exit 2,
failed numeric certificates exit 3, resource caps exit 4.
"""

from __future__ import annotations


class FractubeError(Exception):
    """Base class for all library errors."""


class ConfigError(FractubeError):
    """Malformed configuration, bad parameter values, unknown fields."""

    exit_code = 2


class MapParseError(ConfigError):
    """Syntax error in a map expression; carries the token position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (token {position})")
        self.position = position


class MapDomainError(FractubeError):
    """Map rejected on its domain: vanishing derivative, pole inside the
    box, point outside the domain box."""

    exit_code = 3


class WindowViolationError(ConfigError):
    """eps too large for the cylinder window of a local tube volume."""


class SscViolationError(FractubeError):
    """Strong separation could not be certified (kappa lower bound <= 0)."""

    exit_code = 3

    def __init__(self, message: str, kappa_hi: float):
        super().__init__(message)
        self.kappa_hi = kappa_hi


class CertificateError(FractubeError):
    """A constructive numeric certificate failed; names the invariant."""

    exit_code = 3

    def __init__(self, invariant: str, detail: str = ""):
        msg = f"certificate failed: {invariant}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.invariant = invariant


class NumericError(FractubeError):
    """Solver/quadrature failed to converge.  Should be unreachable with
    the bracketed fallbacks in place."""

    exit_code = 3


class ResourceLimitError(FractubeError):
    """A configured cap (word count, grid memory) was exceeded."""

    exit_code = 4

    def __init__(self, cap_name: str, cap_value: int | float):
        super().__init__(f"resource cap exceeded: {cap_name} = {cap_value}")
        self.cap_name = cap_name
        self.cap_value = cap_value

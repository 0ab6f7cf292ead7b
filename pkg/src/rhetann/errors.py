"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage problems are handled by click
(exit 1), ``DataError`` and subclasses exit 2, ``TransportExhausted``
exits 3.
"""


class RhetAnnError(Exception):
    """Base class for all errors raised by this package."""


class DataError(RhetAnnError):
    """Malformed, inconsistent, or unresolvable data."""


class TaxonomyError(DataError):
    pass


class TreeParseError(DataError):
    """Bracketed-tree syntax error. Carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class CorpusError(DataError):
    pass


class StoreError(DataError):
    pass


class PromptError(DataError):
    pass


class AgreementError(DataError):
    pass


class FinetuneError(DataError):
    pass


class EvalError(DataError):
    pass


class GatewayError(RhetAnnError):
    pass


class TransportError(GatewayError):
    """One request attempt failed; the gateway may retry it."""


class ContextOverflow(GatewayError, DataError):
    """Pre-flight token estimate exceeds the model's context window."""


class AuthenticationError(GatewayError):
    pass


class TransportExhausted(GatewayError):
    """All retries for a request failed."""

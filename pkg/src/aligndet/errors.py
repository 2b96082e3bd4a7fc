"""Exception hierarchy shared by every aligndet module."""

from __future__ import annotations


class AlignDetError(Exception):
    """Base class for all aligndet errors."""


class ParseError(AlignDetError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvariantViolation(AlignDetError):
    """Raised with the located diagnostics of every failed invariant."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = [str(d) for d in self.diagnostics]
        super().__init__("; ".join(lines) if lines else "invariant violation")


class InvalidImage(AlignDetError):
    pass


class EncodeError(AlignDetError):
    pass


class DegenerateOutput(AlignDetError):
    pass


class InvalidParameter(AlignDetError, ValueError):
    pass


class EmptyPool(AlignDetError):
    pass


class ReconstructionFailure(AlignDetError):
    def __init__(self, record_id: str, cause: Exception | None = None):
        self.record_id = record_id
        super().__init__(f"reconstruction failed for {record_id!r}: {cause}")


class UnknownPairTarget(AlignDetError):
    def __init__(self, fake_id: str, real_id: str):
        self.fake_id = fake_id
        self.real_id = real_id
        super().__init__(f"fake {fake_id!r} is paired with unknown real {real_id!r}")


class UnmatchedCaption(AlignDetError):
    def __init__(self, record_id: str):
        self.record_id = record_id
        super().__init__(f"fake {record_id!r} does not match any real caption hash")


class ResponderFailure(AlignDetError):
    def __init__(self, record_id: str, cause: Exception | None = None):
        self.record_id = record_id
        super().__init__(f"responder failed for {record_id!r}: {cause}")


class DegenerateCorpus(AlignDetError):
    pass


class NonFiniteLoss(AlignDetError):
    pass


class BackendUnavailable(AlignDetError):
    pass


class BackendTimeout(AlignDetError):
    pass


class MalformedResponse(AlignDetError):
    pass


class EmptyBatch(AlignDetError):
    pass


class RoleMismatch(AlignDetError):
    pass


class DetectionError(AlignDetError):
    pass


class UnknownVerdict(AlignDetError):
    """Raised by the semantic branch when the unknown-verdict policy is ``error``."""


class SingleClassInput(AlignDetError):
    pass


class EmptyResults(AlignDetError):
    pass


class FailureBudgetExceeded(AlignDetError):
    pass


class ConfigError(AlignDetError):
    pass

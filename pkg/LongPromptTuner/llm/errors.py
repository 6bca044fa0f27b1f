from errors import TunerError


class GatewayError(TunerError):
    """Base class for failures of the text-generation gateway."""


class BackendUnavailable(GatewayError):
    """The backend kept failing after all retry attempts."""


class FixtureMissing(BackendUnavailable):
    """The scripted backend has no reply for a request."""


class BudgetExceeded(GatewayError):
    """The request would push the usage ledger past its token cap."""


class NoParseableBlock(GatewayError):
    """A reply contains no JSON value, even after repairs."""


class MalformedReply(GatewayError):
    """The endpoint answered, but not with a chat completion."""

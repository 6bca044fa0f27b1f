from errors import TunerError


class ActionError(TunerError):
    pass


class InvalidAction(ActionError):
    """An action that is malformed or violates the structure of the tree."""


class CapacityExceeded(ActionError):
    pass


class MergeTargetMissing(ActionError):
    pass


class GenerationUnparseable(ActionError):
    """The model's reply to an example request holds no brace-delimited entries."""

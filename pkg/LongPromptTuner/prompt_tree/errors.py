from errors import TunerError


class PromptTreeError(TunerError):
    pass


class EmptyInput(PromptTreeError):
    pass


class PathNotFound(PromptTreeError):
    pass


class AmbiguousPath(PromptTreeError):
    pass


class DuplicateSiblingTitle(PromptTreeError):
    pass


class MalformedStructure(UserWarning):
    """Heading levels skip downwards; the parser clamps them and carries on."""

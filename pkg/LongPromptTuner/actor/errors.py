from errors import TunerError


class ActorError(TunerError):
    pass


class ClassNamesAltered(ActorError):
    """A rewritten prompt no longer names every output class of the task."""

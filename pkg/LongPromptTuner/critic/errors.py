from errors import TunerError


class CriticError(TunerError):
    pass


class EmptyBatch(CriticError):
    """Error reflection needs at least one misclassified example."""

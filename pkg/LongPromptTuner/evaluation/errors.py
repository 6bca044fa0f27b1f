from errors import TunerError


class EvaluationError(TunerError):
    pass


class EmptyRecords(EvaluationError):
    pass


class DatasetNotFound(EvaluationError):
    pass


class DatasetInvalid(EvaluationError):
    pass

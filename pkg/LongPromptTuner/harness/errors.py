from errors import TunerError


class HarnessError(TunerError):
    pass


class ConfigError(HarnessError):
    """The run configuration is missing, unreadable or invalid."""


class EmptyRun(HarnessError):
    """The run directory holds no completed step to report on."""


class OutOfRangeScore(HarnessError):
    """A judge score lies outside of 1 to 10."""


class RunAlreadyComplete(HarnessError):
    pass

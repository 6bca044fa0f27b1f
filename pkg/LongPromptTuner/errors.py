class TunerError(Exception):
    """Base class for all errors raised by the prompt tuner."""

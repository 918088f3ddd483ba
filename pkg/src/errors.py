class QuinticError(Exception):
    pass

class ConfigError(QuinticError):
    pass

class ValidationError(QuinticError):
    pass

class QuoteError(ValidationError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line

class InsufficientQuotesError(ValidationError):
    pass

class RegimeMismatchError(ValidationError):
    pass

class NumericalError(QuinticError):
    pass

class OutOfBoundsPriceError(NumericalError):
    pass

class DegenerateNormalizationError(NumericalError):
    pass

class OutOfHorizonError(NumericalError):
    pass

class NegativePolynomialError(NumericalError):
    pass

class ArbitrageError(NumericalError):
    pass

class FitFailureError(NumericalError):
    pass

class UnpriceableInstrumentError(NumericalError):
    def __init__(self, message: str, offending: list | None = None):
        super().__init__(message)
        self.offending = list(offending or [])

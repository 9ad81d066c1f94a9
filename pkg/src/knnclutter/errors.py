"""Exception hierarchy shared by the library and the command line."""


class KnnClutterError(Exception):
    """Base class for all errors raised by knnclutter."""


class InvalidK(KnnClutterError, ValueError):
    pass


class TooFewPoints(KnnClutterError, ValueError):
    pass


class LengthMismatch(KnnClutterError, ValueError):
    pass


class InvalidWindow(KnnClutterError, ValueError):
    pass


class InvalidParams(KnnClutterError, ValueError):
    pass


class OutOfRange(KnnClutterError, ValueError):
    pass


class DegenerateDistances(KnnClutterError, ArithmeticError):
    pass


class DegenerateComponent(KnnClutterError, ArithmeticError):
    """EM collapsed onto a single component.

    The posterior and parameters at the moment of collapse are kept on the
    exception so callers can still label points (all clutter or all feature).
    """

    def __init__(self, message, delta=None, lambda1=None, lambda2=None, p=None):
        super().__init__(message)
        self.delta = delta
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.p = p


class NonFinite(KnnClutterError, ArithmeticError):
    pass


class KSetTooLarge(KnnClutterError, ValueError):
    pass


class PatternTooSmall(KnnClutterError, ValueError):
    pass


class MissingTruth(KnnClutterError, ValueError):
    pass


class PatternParseError(KnnClutterError, ValueError):
    pass


class ConfigError(KnnClutterError, ValueError):
    pass

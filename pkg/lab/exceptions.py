class LabError(Exception):
    """Base class for every error raised by the lab library."""


class ScenarioError(LabError):
    pass


class GeometryError(LabError, ValueError):
    pass


class DimensionError(LabError, ValueError):
    pass


class ActionError(LabError, ValueError):
    pass


class EpisodeDone(LabError):
    pass


class NumericalError(LabError, ArithmeticError):
    pass


class MissingCheckpoint(LabError, FileNotFoundError):
    pass


class ExportError(LabError):
    pass

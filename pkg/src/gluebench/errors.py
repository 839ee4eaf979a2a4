"""Exception hierarchy shared by all modules.

Mathematical obstructions (``NetSourceMismatch``, ``NoConvergence``) are kept
apart from input errors so the command line can map them to distinct exit
codes.
"""


class GlueError(Exception):
    """Base class for every error raised by gluebench."""


class InputError(GlueError):
    """Invalid arguments, configuration or geometry."""


class Obstruction(GlueError):
    """A mathematical obstruction met while solving."""


class EmptyRegion(InputError):
    pass


class DomainMismatch(InputError):
    pass


class SurfaceOutsideDomain(InputError):
    pass


class ParamOutOfRange(InputError):
    pass


class BandOutsideRegion(InputError):
    pass


class DomainContainsSingularity(InputError):
    pass


class MetricNotPositive(InputError):
    pass


class ConfigError(InputError):
    pass


class DegenerateMass(GlueError):
    pass


class NetSourceMismatch(Obstruction):
    """The source has a component along the constants (or static KIDs).

    ``defect`` holds the measured value of that component.
    """

    def __init__(self, msg, defect=float("nan")):
        super().__init__(msg)
        self.defect = defect


class NoConvergence(Obstruction):
    def __init__(self, msg, iterations=0, residual=float("nan")):
        super().__init__(msg)
        self.iterations = iterations
        self.residual = residual

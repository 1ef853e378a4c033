"""Exception hierarchy shared by all derstab modules."""


class DerstabError(Exception):
    """Base class for every error raised by this package."""


class InputError(DerstabError):
    """Bad user input (files, arguments). Maps to CLI exit code 2."""


class ParseError(InputError):
    """A feeder, placement, profile or tariff file is malformed."""

    def __init__(self, msg, line=None):
        if line is not None:
            msg = f"line {line}: {msg}"
        super().__init__(msg)
        self.line = line


class TopologyError(InputError):
    """The feeder graph is not a tree rooted at node 0."""


class FileError(InputError):
    """A referenced file does not exist or cannot be read."""


class DimensionError(DerstabError, ValueError):
    """Matrix or index dimensions are inconsistent."""


class AssumptionError(DerstabError):
    """Every sensor node must also host a DER for the reduction to be minimal."""


class SparsityError(DerstabError, ValueError):
    """A gain matrix has a nonzero outside its communication pattern."""


class NumericalError(DerstabError):
    """Numerical failure. Maps to CLI exit code 3."""


class EigenFailure(NumericalError):
    pass


class ExplosionError(NumericalError):
    """Polytope generation would exceed the configured row cap."""


class InfeasibleError(NumericalError):
    pass


class UnboundedError(NumericalError):
    pass


class DegenerateError(NumericalError):
    pass


class PowerFlowDiverged(NumericalError):
    """The backward/forward sweep did not converge."""


class MismatchedScenario(InputError):
    """Two traces that should share a scenario do not."""

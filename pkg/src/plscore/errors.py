"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class PlscoreError(Exception):
    pass


class ConfigError(PlscoreError):
    """Invalid run configuration (bad flag value, missing file, bad combination)."""


class DataError(PlscoreError):
    """Input data violates a structural invariant (masking, domains, shapes)."""


class NumericalError(PlscoreError):
    """A numerical procedure failed (singular system, degenerate component, ...)."""


class SingularSystemError(NumericalError):
    """Rank-deficient weighted design inside the IRLS solver."""

    def __init__(self, msg: str = "singular IRLS system"):
        super().__init__(msg)


class DegenerateComponentError(NumericalError):
    """A component collapsed to the zero vector.

    ``achieved`` carries the number of components successfully extracted
    before the failure.
    """

    def __init__(self, msg: str = "degenerate component", achieved: int = 0):
        super().__init__(msg)
        self.achieved = achieved


class DeflationCollapseError(NumericalError):
    def __init__(self, msg: str = "deflation collapse: singular P'W"):
        super().__init__(msg)


class BootstrapInstabilityError(NumericalError):
    def __init__(self, msg: str = "bootstrap instability: redraw budget exhausted"):
        super().__init__(msg)

"""Exception types shared across the package."""


class CNFGNNError(Exception):
    pass


class DimensionError(CNFGNNError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(CNFGNNError, RuntimeError):
    """A call violated an API precondition (e.g. backward on a non-scalar)."""


class DegenerateInputError(CNFGNNError, ValueError):
    """Input is well-formed but carries no usable information."""


class GraphConsistencyError(CNFGNNError, ValueError):
    pass


class ProtocolError(CNFGNNError, RuntimeError):
    """Federation phases were executed out of order."""


class ConfigError(CNFGNNError, ValueError):
    pass


class NoFormulaError(CNFGNNError, ValueError):
    """No analytic communication-cost formula exists for the strategy."""


class NumericFailure(CNFGNNError, FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, msg, round=None, phase=None):
        super().__init__(msg)
        self.round = round
        self.phase = phase

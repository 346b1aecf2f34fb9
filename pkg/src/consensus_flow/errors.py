"""Exception hierarchy shared by every module of the package."""


class ConsensusFlowError(Exception):
    """Base class for all errors raised by consensus_flow."""


class DimensionMismatch(ConsensusFlowError, ValueError):
    pass


class UnsupportedSet(ConsensusFlowError):
    """The requested oracle is not available for this set variant."""


class NotInSet(ConsensusFlowError, ValueError):
    pass


class DykstraNonConvergence(ConsensusFlowError):
    def __init__(self, sweeps, residual):
        super().__init__(
            f"Dykstra projection did not converge after {sweeps} sweeps "
            f"(last displacement {residual:.3e})"
        )
        self.sweeps = sweeps
        self.residual = residual


class NotUnivariate(ConsensusFlowError, ValueError):
    pass


class NotBox(ConsensusFlowError, ValueError):
    pass


class InvalidFunction(ConsensusFlowError, ValueError):
    pass


class InvalidSet(ConsensusFlowError, ValueError):
    pass


class NotSymmetric(ConsensusFlowError, ValueError):
    def __init__(self, i, j):
        super().__init__(f"adjacency is not symmetric at ({i}, {j})")
        self.i, self.j = i, j


class NegativeWeight(ConsensusFlowError, ValueError):
    def __init__(self, i, j, w):
        super().__init__(f"negative weight {w} at ({i}, {j})")
        self.i, self.j = i, j


class Disconnected(ConsensusFlowError, ValueError):
    def __init__(self, components):
        self.components = components
        parts = "; ".join("{" + ", ".join(map(str, c)) + "}" for c in components)
        super().__init__(f"graph is disconnected, components: {parts}")


class EigenNonConvergence(ConsensusFlowError):
    def __init__(self, sweeps, off_norm):
        super().__init__(
            f"Jacobi eigensolver did not converge after {sweeps} sweeps "
            f"(off-diagonal norm {off_norm:.3e})"
        )
        self.off_norm = off_norm


class NonFinite(ConsensusFlowError):
    def __init__(self, step):
        super().__init__(f"non-finite state encountered at step {step}")
        self.step = step


class Infeasible(ConsensusFlowError, ValueError):
    pass


class IdentityViolation(ConsensusFlowError):
    pass


class InfeasibleSplit(ConsensusFlowError):
    pass


class UnboundedFeasibleSet(ConsensusFlowError, ValueError):
    pass


class EmptyIntersection(ConsensusFlowError, ValueError):
    pass


class ConfigError(ConsensusFlowError, ValueError):
    """Config validation failure; ``path`` is a JSON-pointer-style location."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path

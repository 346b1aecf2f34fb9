"""
Distributed projected primal-dual consensus flow for nonsmooth convex
problems with agent-local constraint sets.

Modules
-------
sets       convex sets with projection and cone oracles
funcs      convex costs with subdifferential oracles
network    weighted graphs and Laplacian spectra
dynamics   time stepping of the flow
certify    optimality certificates and Lyapunov audits
oracle     centralised reference solvers
cli        command-line harness
"""

from .dynamics import ProblemInstance, SystemState, TrajectoryTrace, run, velocity_field
from .errors import ConsensusFlowError
from .experiment import paper_instance
from .network import Network, build

__all__ = [
    "ConsensusFlowError",
    "Network",
    "ProblemInstance",
    "SystemState",
    "TrajectoryTrace",
    "build",
    "paper_instance",
    "run",
    "velocity_field",
]
__version__ = "0.1.0"

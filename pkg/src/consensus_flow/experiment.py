"""The built-in five-agent example: deadzone costs on shifted intervals."""

import numpy as np

from .dynamics import ProblemInstance
from .funcs import Deadzone
from .network import build
from .sets import Box, WholeSpace

PAPER_ADJACENCY = [
    [0, 1, 0, 0, 1],
    [1, 0, 1, 0, 1],
    [0, 1, 0, 1, 0],
    [0, 0, 1, 0, 1],
    [1, 1, 0, 1, 0],
]
PAPER_OPTIMUM = -1.0
PAPER_FLAT_OPTIMA = (0.0, 6.0)


def paper_sets(unconstrained=False):
    if unconstrained:
        return tuple(WholeSpace(1) for _ in range(5))
    return tuple(Box([i - 12.0], [i - 2.0]) for i in range(1, 6))


def paper_costs():
    return tuple(Deadzone(i, 5.0) for i in range(1, 6))


def paper_instance(unconstrained=False, alpha=1.0, x0=None, lam0=None):
    """Agent ``i`` (1-based) has cost zero on ``[i-5, i+5]`` and box ``[i-12, i-2]``.

    Initial estimates default to the box midpoints ``i - 7`` (also used for
    the unconstrained variant) and zero duals.
    """
    if x0 is None:
        x0 = np.array([[i - 7.0] for i in range(1, 6)])
    if lam0 is None:
        lam0 = np.zeros((5, 1))
    return ProblemInstance(
        paper_costs(), paper_sets(unconstrained), x0, lam0, build(PAPER_ADJACENCY, 1), alpha
    )


def paper_config(unconstrained=False):
    """The same instance as a config document for the ``run`` command."""
    agents = []
    for i in range(1, 6):
        s = {"type": "whole", "dim": 1} if unconstrained else {"type": "box", "lo": [i - 12.0], "hi": [i - 2.0]}
        agents.append(
            {
                "cost": {"type": "deadzone", "center": float(i), "halfwidth": 5.0},
                "set": s,
                "x0": [i - 7.0],
                "lambda0": [0.0],
            }
        )
    return {
        "description": "five agents with deadzone costs on shifted intervals",
        "agents": agents,
        "graph": {"adjacency": [list(row) for row in PAPER_ADJACENCY]},
        "params": {
            "alpha": 1.0,
            "h": 1e-3,
            "t_end": 60.0,
            "stop_tol": 1e-6,
            "scheme": "auto",
            "k_fraction": 0.5,
            "record_stride": 1,
            "seed": 0,
        },
        "outputs": {"dir": "out", "emit_svg": True, "emit_lyapunov": True},
    }

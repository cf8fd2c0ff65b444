"""Built-in example plants: point-kinetics fission reactor and a two-motor hydraulic rig."""
from __future__ import annotations

import numpy as np

from .core import BilinearSystem
from .errors import InvalidArgumentError

# Point neutron kinetics, discretized.
NUCLEAR_TS = 0.001
NUCLEAR_BETA = 0.157e-3
NUCLEAR_GEN_TIME = 8.36e-4
NUCLEAR_DECAY = 0.0120


def nuclear_system() -> BilinearSystem:
    ts, beta, l, lam = NUCLEAR_TS, NUCLEAR_BETA, NUCLEAR_GEN_TIME, NUCLEAR_DECAY
    # A[0, 0] as printed in the source model; overridable through config.
    A = np.array([[(1.0 - ts) / l, lam * ts], [0.0, 1.0 - lam * ts]])
    D1 = np.array([[(1.0 - beta) / l], [beta / l]]) * ts
    return BilinearSystem(A=A, B=np.zeros((2, 1)), D=np.stack([D1, np.zeros((2, 1))]))


def hydraulic_system() -> BilinearSystem:
    A = np.diag([0.99997, -0.99997, 0.99997])
    B = np.diag([200.0, 6.0, 10.0])
    D1 = np.array([[0, 0, 0], [0, 0, 0], [0, 0.03, 0.03]], dtype=float)
    D2 = np.array([[0, -0.00007, 0], [0, 0, 0], [0, 0, 0]], dtype=float)
    D3 = np.array([[0, 0, -0.00007], [0, 0, 0], [0, 0, 0]], dtype=float)
    return BilinearSystem(A=A, B=B, D=np.stack([D1, D2, D3]))


# Per-example defaults for everything that is not a plant matrix.
EXAMPLE_DEFAULTS = {
    "nuclear": {
        "Lambda": np.diag([1.0, 0.0, 0.1]).tolist(),
        "gamma": 0.9,
        "x0": [1.0, 1.0],
        "best_effort_on_nonconvergence": True,
    },
    "hydraulic": {
        "Lambda": np.eye(6).tolist(),
        "gamma": 0.9,
        "x0": [1.0, 1.0, 1.0],
        "best_effort_on_nonconvergence": False,
    },
}

_SYSTEMS = {"nuclear": nuclear_system, "hydraulic": hydraulic_system}


def example_names():
    return sorted(_SYSTEMS)


def example_system(name: str) -> BilinearSystem:
    try:
        return _SYSTEMS[name]()
    except KeyError:
        raise InvalidArgumentError(f"unknown example {name!r}; choose from {example_names()}") from None

"""Quasi-static finite-element simulation of frictional fault reactivation.

The package couples a linear poroelastic medium, discretized with trilinear
hexahedra, to zero-thickness frictional interface elements carrying
piecewise-constant traction multipliers.  Pressure changes in reservoir
compartments load the medium one-way; an active-set Coulomb algorithm with
optional slip weakening resolves stick, slip and opening on the faults.

Submodules are imported lazily so that the command line interface can pin
thread counts before any BLAS-backed module loads.
"""

__version__ = "0.1.0"

__all__ = [
    "analysis",
    "assembly",
    "cli",
    "config",
    "constitutive",
    "contact",
    "mesh",
    "pressure",
    "scenario",
    "solver",
    "spring1d",
    "vtkio",
]


def __getattr__(name):
    if name in __all__:
        import importlib

        return importlib.import_module(f"{__name__}.{name}")
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")

"""Quantum multiparameter estimation bounds and measurement-scheme simulation."""

try:
    from ._qmpe import (
        __version__,
        canonical,
        qubit_coords,
        simulate_linear,
        spin_bounds,
        thermal_bounds,
    )
except ImportError:  # development layout: extension next to the build tree
    from _qmpe import (
        __version__,
        canonical,
        qubit_coords,
        simulate_linear,
        spin_bounds,
        thermal_bounds,
    )

__all__ = [
    "__version__",
    "canonical",
    "qubit_coords",
    "simulate_linear",
    "spin_bounds",
    "thermal_bounds",
]

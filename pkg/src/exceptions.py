#!/usr/bin/env python3
"""
⚠️ Error hierarchy
Failures raised by the profile solver, the mesh loader, the finite-volume
scheme and the decay diagnostics.

Numerical failures share the ``NumericalFailure`` base so the command-line
front end can map all of them to a single exit code.
"""

from typing import Optional


class IntrusionError(RuntimeError):
    """Base class for every error raised by this package"""


class UsageError(IntrusionError):
    """A command was invoked with missing or inconsistent options"""


class CheckpointError(IntrusionError):
    """A checkpoint file is malformed or belongs to another mesh"""


class NumericalFailure(IntrusionError):
    """A computation did not produce a trustworthy result"""


class DegenerateCaseError(NumericalFailure):
    """A case formula denominator vanishes within the classification tolerance"""

    def __init__(self, name: str, value: float):
        super().__init__(f"Denominator {name} vanishes ({value!r})")
        self.name = name
        self.value = value


class InfeasibleRootError(NumericalFailure):
    """The selected root of the profile quadratic is negative"""


class MeshError(IntrusionError):
    """Base class for mesh construction failures"""


class MeshParseError(MeshError):
    """The mesh description is malformed"""

    def __init__(self, message: str, line: Optional[int] = None):
        location = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{location}")
        self.line = line


class AdmissibilityError(MeshError):
    """The centre-to-centre segment of an interior edge is not orthogonal to it"""

    def __init__(self, message: str, edge: Optional[tuple] = None):
        super().__init__(message)
        self.edge = edge


class NegativeMeasureError(MeshError):
    """A cell has zero or negative area"""


class NonConvergenceError(NumericalFailure):
    """Newton-Raphson did not reach the residual tolerance"""

    def __init__(self, iterations: int, residual: float):
        super().__init__(
            f"Newton did not converge after {iterations} iterations "
            f"(residual {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


class LinearSolveFailure(NumericalFailure):
    """The Newton Jacobian could not be factorized"""


class StepUnderflowError(NumericalFailure):
    """The adaptive time step fell below its lower bound"""

    def __init__(self, time: float, dt: float):
        super().__init__(f"Time step underflow at t={time!r} (dt={dt:.3e})")
        self.time = time
        self.dt = dt


class NotStationaryError(NumericalFailure):
    """Time marching stopped before the steady residual fell below tolerance"""


class InsufficientDataError(NumericalFailure):
    """Too few points in the window of a decay fit"""


class NonPositiveEnergyError(NumericalFailure):
    """A non-positive relative energy was found in the decay-fit window"""

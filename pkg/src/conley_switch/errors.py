"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field


class ConleySwitchError(Exception):
    """Base class for all errors raised by this package."""


@dataclass(frozen=True)
class Violation:
    """One failed validation constraint.

    ``kind`` is a stable machine-readable name such as ``"TagConstraintViolated"``;
    ``detail`` carries the offending indices or values.
    """

    kind: str
    message: str
    detail: dict = field(default_factory=dict)


class SystemValidationError(ConleySwitchError):
    """Raised with the full list of violations found in a system description."""

    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        lines = [f"{v.kind}: {v.message}" for v in self.violations]
        super().__init__("invalid switching system:\n  " + "\n  ".join(lines))

    @property
    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


class ParseError(ConleySwitchError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


class NoFiniteThreshold(ConleySwitchError):
    """The grid has no finite threshold, so the collar width bound is undefined."""


class BlackVertexPresent(ConleySwitchError):
    def __init__(self, vertex, witness: str):
        self.vertex = vertex
        self.witness = witness
        super().__init__(
            f"black vertex {vertex}: {witness}; split the self-repressing species "
            "into separate nodes so that no wall absorbs flow from both sides"
        )


class NotForwardInvariant(ConleySwitchError):
    def __init__(self, vertex, image):
        self.vertex = vertex
        self.image = image
        super().__init__(f"vertex {vertex} maps to {image}, which is outside the set")


class TooLarge(ConleySwitchError):
    pass


class NotDistributive(ConleySwitchError):
    def __init__(self, triple):
        self.triple = triple
        super().__init__(f"distributivity fails on the triple {triple}")


class DeltaTooLarge(ConleySwitchError):
    pass


class InvalidIncidence(ConleySwitchError):
    pass


class HypothesesNotMet(ConleySwitchError):
    def __init__(self, cell_types):
        self.cell_types = cell_types
        super().__init__(f"chip transversality hypotheses fail for cell types {cell_types}")


class OutOfDomain(ConleySwitchError):
    pass


class DomainExit(ConleySwitchError):
    def __init__(self, step: int):
        self.step = step
        super().__init__(f"trajectory left the positive quadrant at step {step}")


class TransversalityFail(ConleySwitchError):
    def __init__(self, edge, point, margin: float):
        self.edge = edge
        self.point = point
        self.margin = margin
        super().__init__(f"V.n = {margin:.3g} >= 0 at {point} on edge {edge}")


class InvarianceViolation(ConleySwitchError):
    def __init__(self, trajectory: int, step: int):
        self.trajectory = trajectory
        self.step = step
        super().__init__(f"trajectory {trajectory} left the region at step {step}")


class OrderViolation(ConleySwitchError):
    def __init__(self, trajectory: int, step: int):
        self.trajectory = trajectory
        self.step = step
        super().__init__(f"trajectory {trajectory} moved up the region lattice at step {step}")


class LatticePropertyViolation(ConleySwitchError):
    def __init__(self, witness):
        self.witness = witness
        super().__init__(f"region lattice property fails: {witness}")


class DegenerateGeometry(ConleySwitchError):
    pass


class InternalClassificationGap(ConleySwitchError):
    pass

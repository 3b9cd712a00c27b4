"""Exceptions shared across the simulator."""

from __future__ import annotations


class NodeError(Exception):
    """Wave function evaluated too close to a node.

    Raised when the interference sum is smaller than ``rel_threshold`` times
    the largest branch magnitude at the point, so phases and phase gradients
    are no longer meaningful there.
    """

    def __init__(self, message: str, rel_magnitude: float = 0.0,
                 rel_threshold: float = 0.0):
        super().__init__(message)
        self.rel_magnitude = rel_magnitude
        self.rel_threshold = rel_threshold


class NodeStall(Exception):
    """Trajectory integration could not get past a node.

    Step halving was exhausted without a node-free sub-step. ``last_good_tau``
    is the diagonal time of the last accepted point.
    """

    def __init__(self, message: str, last_good_tau: float):
        super().__init__(message)
        self.last_good_tau = last_good_tau


class Unclassifiable(Exception):
    """All branch magnitudes vanished at the point; no weight assignment."""


class ParseError(Exception):
    """Scenario file is not syntactically valid JSON."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(message)
        self.line = line
        self.column = column


class ValidationError(Exception):
    """Scenario parsed but violates the schema; message names the offending key."""

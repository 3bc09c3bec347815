"""Refinement of symbolic controllers to the sampled state space and
certified closed-loop simulation.

The refined controller applies, at a concrete state, the inputs enabled at
the cell containing that state. The default policy picks the input with the
smallest worst-case successor value, breaking ties towards the lowest input
index, which makes runs deterministic and the cell value strictly decreasing
until the target is entered.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .abstraction import OutOfDomainError, Quantizer, TargetSpec
from .dynamics import Model, SampledFlow, integrate
from .synthesis import EntryTimeTable, SymbolicController

POLICIES = ("greedy", "first-enabled")


class OutOfWinningSetError(ValueError):
    """The current cell carries no control decision."""


class RefinedController:
    """Symbolic controller lifted to concrete states through the quantizer."""

    def __init__(self, controller: SymbolicController, quantizer: Quantizer,
                 policy: str = "greedy"):
        if policy not in POLICIES:
            raise ValueError(f"unknown policy '{policy}' (choose from {POLICIES})")
        if controller.num_states != quantizer.num_cells:
            raise ValueError("controller and quantizer disagree on the cell count")
        self.controller = controller
        self.quantizer = quantizer
        self.policy = policy
        self._input_values = quantizer.grid.input_values()

    def cell_of(self, x) -> int:
        return int(self.quantizer.quantize(np.asarray(x, dtype=float)))

    def select_input_index(self, cell: int) -> int | None:
        """Input index applied at a cell; None when the cell is a target cell."""
        ctrl = self.controller
        lvl = int(ctrl.levels[cell])
        if lvl > ctrl.num_states:
            raise OutOfWinningSetError(f"cell {cell} is outside the winning set")
        if lvl == 1:
            return None  # target reached, no move needed
        enabled = ctrl.enabled(cell)
        if self.policy == "first-enabled":
            return int(enabled[0])
        worst = ctrl.worst_values(cell)
        return int(enabled[int(np.argmin(worst))])  # argmin keeps the lowest index on ties

    def control_input(self, x) -> np.ndarray | None:
        """Grid input to apply at concrete state x; None signals target reached."""
        u = self.select_input_index(self.cell_of(x))
        return None if u is None else self._input_values[u].copy()


@dataclass
class TraceStep:
    k: int
    state: np.ndarray
    input_index: int
    input: np.ndarray
    cell: int
    value: int


@dataclass
class Trace:
    """Closed-loop run with its certification bracket.

    reason is one of "reached-target", "left-winning-set", "step-limit";
    achieved is the step count at target entry (None otherwise). The
    certificate records lower <= achieved <= upper for the initial cell.
    """
    steps: list
    reason: str
    achieved: int | None
    initial_cell: int | None
    lower_bound: float
    upper_bound: float
    certified: bool
    final_state: np.ndarray = field(default=None)


def simulate(model: Model, flow: SampledFlow, rc: RefinedController,
             x0, W: TargetSpec, max_steps: int,
             lower: EntryTimeTable | None = None) -> Trace:
    """Run the refined controller from x0 until the concrete state enters W.

    Each step applies the selected grid input and integrates one period.
    The trace records, per executed step, the state, applied input, cell and
    cell value. Leaving the winning set aborts the run (it would indicate an
    unsound abstraction); the loop also stops at max_steps.
    """
    grid = rc.quantizer.grid
    x = np.asarray(x0, dtype=float).copy()
    steps = []
    values = rc.controller.values()
    try:
        cell0 = rc.cell_of(x)
    except OutOfDomainError:
        cell0 = None
    lower_bound = 0.0
    if lower is not None and cell0 is not None:
        lower_bound = float(lower.entry_times()[cell0])
    upper_bound = float(values[cell0]) if cell0 is not None else np.inf
    reason = "step-limit"
    achieved = None
    k = 0
    while k <= max_steps:
        if W.contains(x, grid):
            reason = "reached-target"
            achieved = k
            break
        if k == max_steps:
            break
        try:
            cell = rc.cell_of(x)
            uidx = rc.select_input_index(cell)
        except (OutOfDomainError, OutOfWinningSetError):
            reason = "left-winning-set"
            break
        if uidx is None:
            # target cell but concrete point outside W cannot happen when the
            # upper game used the inner cell cover of W; stop defensively
            reason = "left-winning-set"
            break
        u = rc._input_values[uidx]
        steps.append(TraceStep(k=k, state=x.copy(), input_index=uidx,
                               input=u.copy(), cell=cell, value=int(values[cell])))
        x = integrate(model, flow, x, u)
        k += 1
    certified = (reason == "reached-target"
                 and lower_bound <= achieved <= upper_bound)
    return Trace(steps=steps, reason=reason, achieved=achieved,
                 initial_cell=cell0, lower_bound=lower_bound,
                 upper_bound=upper_bound, certified=certified, final_state=x)

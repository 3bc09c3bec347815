"""Fixed-point solvers for reachability and safety games on finite systems.

Transitions all cost one sampling period, so entry-time levels are breadth
layers of the one-step predecessor operator

    reach_step(Z) = W  union  { x : exists u with {} != Post_u(x) subset Z }.

The pessimistic solver treats nondeterminism adversarially (all successors
must already be won); the optimistic solver resolves it favourably (one
successor suffices), which equals solving the game on the determinized
system whose inputs are (input, successor) pairs. Finite levels never exceed
the state count; unreachable states carry the sentinel level num_states+1.

Each solver call is single-threaded over the shared immutable system;
independent solver calls may run concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fts import FiniteSystem, StateSet, segment_sums


class IntegrityError(ValueError):
    """A table or controller was paired with a system it was not computed from."""


@dataclass
class EntryTimeTable:
    """Per-state level l(x) of the fixed-point iteration; entry time is l(x)-1.

    Levels are 1 on target states, k for states first won after k operator
    applications, and num_states+1 (the infinity sentinel) elsewhere.
    """
    levels: np.ndarray
    mode: str  # "pessimistic" or "optimistic"
    num_states: int
    iterations: int

    @property
    def inf_level(self) -> int:
        return self.num_states + 1

    def entry_time(self, x: int):
        lvl = int(self.levels[x])
        return lvl - 1 if lvl <= self.num_states else math.inf

    def entry_times(self) -> np.ndarray:
        """Float vector of entry times with inf for unreachable states."""
        out = self.levels.astype(float) - 1.0
        out[self.levels > self.num_states] = np.inf
        return out

    def winning(self) -> StateSet:
        return StateSet.from_mask(self.levels <= self.num_states)


@dataclass
class SafetyController:
    """Least restrictive safety result: allowed inputs on the maximal safe set."""
    allowed: np.ndarray  # bool, (num_states, num_inputs)
    domain: StateSet

    def allowed_inputs(self, x: int) -> np.ndarray:
        return np.flatnonzero(self.allowed[x])


@dataclass
class SymbolicController:
    """Per-state enabled input sets with their certified entry-time values.

    Enabled sets are non-empty exactly on winning states outside the target;
    every enabled input forces all successors at least one level closer to
    the target. Stored CSR-style: inputs of state x live at
    enabled_inputs_flat[offsets[x]:offsets[x+1]], with the matching
    worst-case successor values alongside.
    """
    num_states: int
    num_inputs: int
    levels: np.ndarray
    offsets: np.ndarray
    enabled_inputs_flat: np.ndarray
    worst_values_flat: np.ndarray

    @property
    def inf_level(self) -> int:
        return self.num_states + 1

    def value(self, x: int):
        lvl = int(self.levels[x])
        return lvl - 1 if lvl <= self.num_states else math.inf

    def values(self) -> np.ndarray:
        out = self.levels.astype(float) - 1.0
        out[self.levels > self.num_states] = np.inf
        return out

    def enabled(self, x: int) -> np.ndarray:
        return self.enabled_inputs_flat[self.offsets[x]:self.offsets[x + 1]]

    def worst_values(self, x: int) -> np.ndarray:
        return self.worst_values_flat[self.offsets[x]:self.offsets[x + 1]]

    def domain(self) -> StateSet:
        return StateSet.from_mask(self.levels <= self.num_states)

    def target_cells(self) -> StateSet:
        return StateSet.from_mask(self.levels == 1)


def reach_step(sys: FiniteSystem, W: StateSet, Z: StateSet) -> StateSet:
    """One application of the reachability predecessor operator (for property checks)."""
    outside = ~Z.mask[sys._targets]
    bad = segment_sums(outside, sys._offsets)
    pair_ok = (sys.pair_counts > 0) & (bad == 0)
    x_ok = pair_ok.reshape(sys.num_states, sys.num_inputs).any(axis=1)
    return StateSet.from_mask(W.mask | x_ok)


def _check_target(sys: FiniteSystem, W: StateSet):
    if W.num_states != sys.num_states:
        raise IntegrityError("target set sized for a different system")


def solve_pessimistic(sys: FiniteSystem, W: StateSet) -> EntryTimeTable:
    """Levels of the minimal fixed point with adversarial nondeterminism.

    Layered backward iteration: a pair (x,u) fires once its last successor
    has been won, at which point x is won one level later. Work is linear in
    the number of transitions.
    """
    _check_target(sys, W)
    N, M = sys.num_states, sys.num_inputs
    inf = N + 1
    levels = np.full(N, inf, dtype=np.int64)
    frontier = W.indices()
    levels[frontier] = 1
    if N == 0:
        return EntryTimeTable(levels, "pessimistic", N, 0)
    rev_offsets, rev_pairs = sys.reverse()
    cnt = sys.pair_counts.copy()
    level = 1
    iterations = 1 if frontier.size else 0
    while frontier.size:
        starts = rev_offsets[frontier]
        lens = rev_offsets[frontier + 1] - starts
        total = int(lens.sum())
        if total == 0:
            break
        base = np.repeat(np.cumsum(lens) - lens, lens)
        idx = np.repeat(starts, lens) + (np.arange(total, dtype=np.int64) - base)
        pairs = rev_pairs[idx]
        dec = np.bincount(pairs, minlength=N * M)
        affected = np.unique(pairs)
        cnt[affected] -= dec[affected]
        done_pairs = affected[cnt[affected] == 0]
        states = np.unique(done_pairs // M)
        new_states = states[levels[states] == inf]
        level += 1
        if new_states.size:
            levels[new_states] = level
            iterations = level
        frontier = new_states
    return EntryTimeTable(levels, "pessimistic", N, iterations)


def solve_optimistic(sys: FiniteSystem, W: StateSet) -> EntryTimeTable:
    """Levels with favourable nondeterminism: one winning successor suffices.

    Equivalent to solve_pessimistic on the determinized system whose input
    alphabet is (input, successor): singleton successor sets turn the subset
    test into membership, so this is plain backward breadth-first search.
    """
    _check_target(sys, W)
    N, M = sys.num_states, sys.num_inputs
    inf = N + 1
    levels = np.full(N, inf, dtype=np.int64)
    frontier = W.indices()
    levels[frontier] = 1
    if N == 0:
        return EntryTimeTable(levels, "optimistic", N, 0)
    rev_offsets, rev_pairs = sys.reverse()
    level = 1
    iterations = 1 if frontier.size else 0
    while frontier.size:
        starts = rev_offsets[frontier]
        lens = rev_offsets[frontier + 1] - starts
        total = int(lens.sum())
        if total == 0:
            break
        base = np.repeat(np.cumsum(lens) - lens, lens)
        idx = np.repeat(starts, lens) + (np.arange(total, dtype=np.int64) - base)
        preds = np.unique(rev_pairs[idx] // M)
        new_states = preds[levels[preds] == inf]
        level += 1
        if new_states.size:
            levels[new_states] = level
            iterations = level
        frontier = new_states
    return EntryTimeTable(levels, "optimistic", N, iterations)


def solve_safety(sys: FiniteSystem, safe: StateSet) -> SafetyController:
    """Maximal fixed point of Z -> {x in safe : exists u, {} != Post_u(x) subset Z}.

    Iterated from `safe` itself; the result is the least restrictive safety
    controller, allowing every input whose successors stay in the fixed point.
    """
    _check_target(sys, safe)
    N, M = sys.num_states, sys.num_inputs
    Z = safe.mask.copy()
    counts = sys.pair_counts
    for _ in range(N + 1):
        outside = ~Z[sys._targets]
        bad = segment_sums(outside, sys._offsets)
        pair_ok = (counts > 0) & (bad == 0)
        x_ok = pair_ok.reshape(N, M).any(axis=1)
        new_Z = Z & x_ok
        if np.array_equal(new_Z, Z):
            break
        Z = new_Z
    outside = ~Z[sys._targets]
    bad = segment_sums(outside, sys._offsets)
    allowed = ((counts > 0) & (bad == 0)).reshape(N, M) & Z[:, None]
    return SafetyController(allowed=allowed, domain=StateSet.from_mask(Z))


def extract_controller(sys: FiniteSystem, W: StateSet,
                       table: EntryTimeTable) -> SymbolicController:
    """Time-optimal controller from a pessimistic table.

    At every winning non-target state, enables exactly the inputs whose
    worst-case successor level is one below the state's own level; target
    states get an empty enabled set.
    """
    _check_target(sys, W)
    if table.mode != "pessimistic":
        raise IntegrityError("controller extraction needs a pessimistic table")
    if table.num_states != sys.num_states or table.levels.size != sys.num_states:
        raise IntegrityError("table was computed for a different system")
    if not np.array_equal(table.levels == 1, W.mask):
        raise IntegrityError("table target states do not match W")
    N, M = sys.num_states, sys.num_inputs
    inf = N + 1
    counts = sys.pair_counts
    nonempty = counts > 0
    worst = np.full(N * M, inf, dtype=np.int64)
    if sys._targets.size:
        starts = sys._offsets[:-1][nonempty]
        worst[nonempty] = np.maximum.reduceat(table.levels[sys._targets], starts)
    state_of_pair = np.repeat(np.arange(N, dtype=np.int64), M)
    lvl_of_pair = table.levels[state_of_pair]
    enabled_pair = nonempty & (lvl_of_pair > 1) & (lvl_of_pair <= N) & (worst <= lvl_of_pair - 1)
    per_state = enabled_pair.reshape(N, M).sum(axis=1)
    interior = (table.levels > 1) & (table.levels <= N)
    if np.any(interior & (per_state == 0)):
        raise IntegrityError("winning state with no admissible input; table/system mismatch")
    offsets = np.zeros(N + 1, dtype=np.int64)
    np.cumsum(per_state, out=offsets[1:])
    enabled_ids = np.flatnonzero(enabled_pair)
    return SymbolicController(
        num_states=N,
        num_inputs=M,
        levels=table.levels.copy(),
        offsets=offsets,
        enabled_inputs_flat=(enabled_ids % M).astype(np.int32),
        worst_values_flat=(worst[enabled_ids] - 1).astype(np.int64),
    )


@dataclass
class SafeReachResult:
    """Everything produced by the safety-then-reachability composition."""
    controller: SymbolicController
    table: EntryTimeTable
    safety: SafetyController
    restricted: FiniteSystem
    target: StateSet


def synthesize_safe_reach(sys: FiniteSystem, safe: StateSet, W: StateSet) -> SafeReachResult:
    """Least restrictive safety controller composed with the time-optimal game.

    Restricts the system to safety-allowed inputs, then solves pessimistic
    reachability towards W intersected with the safe winning set. An empty
    winning set is reported through the result, not raised.
    """
    _check_target(sys, safe)
    _check_target(sys, W)
    safety = solve_safety(sys, safe)
    restricted = sys.restrict(safety.allowed)
    target = W & safety.domain
    table = solve_pessimistic(restricted, target)
    controller = extract_controller(restricted, target, table)
    return SafeReachResult(controller=controller, table=table, safety=safety,
                           restricted=restricted, target=target)

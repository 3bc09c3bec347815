"""Finite nondeterministic transition systems and dense state sets.

A FiniteSystem stores, for every (state, input) pair, the sorted set of
successor states. A pair with no stored successors means the input is
disabled at that state; blocking is encoded by absence, never by an empty
list. Systems are immutable after construction and safe to share between
threads.
"""

from __future__ import annotations

from typing import Iterable, Mapping

import numpy as np


class StateSet:
    """Set of state indices over 0..num_states-1, backed by a dense bool mask."""

    __slots__ = ("mask",)

    def __init__(self, num_states: int, indices: Iterable[int] = ()):
        mask = np.zeros(int(num_states), dtype=bool)
        idx = np.asarray(list(indices), dtype=np.int64)
        if idx.size:
            if idx.min() < 0 or idx.max() >= num_states:
                raise IndexError("state index out of range for StateSet")
            mask[idx] = True
        self.mask = mask

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "StateSet":
        s = cls.__new__(cls)
        s.mask = np.asarray(mask, dtype=bool).copy()
        return s

    @classmethod
    def full(cls, num_states: int) -> "StateSet":
        s = cls.__new__(cls)
        s.mask = np.ones(int(num_states), dtype=bool)
        return s

    @property
    def num_states(self) -> int:
        return self.mask.size

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def __contains__(self, x: int) -> bool:
        return bool(self.mask[x])

    def __len__(self) -> int:
        return int(self.mask.sum())

    def __iter__(self):
        return iter(self.indices())

    def __or__(self, other: "StateSet") -> "StateSet":
        return StateSet.from_mask(self.mask | other.mask)

    def __and__(self, other: "StateSet") -> "StateSet":
        return StateSet.from_mask(self.mask & other.mask)

    def __sub__(self, other: "StateSet") -> "StateSet":
        return StateSet.from_mask(self.mask & ~other.mask)

    def __invert__(self) -> "StateSet":
        return StateSet.from_mask(~self.mask)

    def __le__(self, other: "StateSet") -> bool:
        return bool(np.all(~self.mask | other.mask))

    def __eq__(self, other) -> bool:
        return isinstance(other, StateSet) and np.array_equal(self.mask, other.mask)

    def __repr__(self):
        return f"StateSet({len(self)}/{self.num_states})"


class FiniteSystem:
    """Nondeterministic finite transition system with per-(state, input) successor sets.

    Successor sets are stored in one flat compressed layout: `offsets` has
    length num_states*num_inputs+1 and `targets[offsets[k]:offsets[k+1]]` is
    the sorted successor list of pair k = state*num_inputs + input. Empty
    ranges encode disabled inputs.
    """

    def __init__(self, num_states, num_inputs,
                 transitions: Mapping[tuple, Iterable[int]] | None = None,
                 initial: StateSet | Iterable[int] | None = None):
        num_states = int(num_states)
        num_inputs = int(num_inputs)
        if num_states < 0 or num_inputs < 0:
            raise ValueError("num_states and num_inputs must be nonnegative")
        counts = np.zeros(num_states * num_inputs, dtype=np.int64)
        cleaned = {}
        for (x, u), succ in (transitions or {}).items():
            x, u = int(x), int(u)
            if not (0 <= x < num_states and 0 <= u < num_inputs):
                raise IndexError(f"transition key ({x},{u}) out of range")
            arr = np.unique(np.asarray(list(succ), dtype=np.int64))
            if arr.size == 0:
                continue  # empty list means disabled, same as absent
            if arr[0] < 0 or arr[-1] >= num_states:
                raise IndexError(f"successor out of range at ({x},{u})")
            cleaned[(x, u)] = arr
            counts[x * num_inputs + u] = arr.size
        offsets = np.zeros(num_states * num_inputs + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        targets = np.zeros(offsets[-1], dtype=np.int32)
        for (x, u), arr in cleaned.items():
            k = x * num_inputs + u
            targets[offsets[k]:offsets[k + 1]] = arr
        self._init_from_csr(num_states, num_inputs, offsets, targets, initial)

    @classmethod
    def from_csr(cls, num_states, num_inputs, offsets, targets,
                 initial=None, validate=True) -> "FiniteSystem":
        """Build directly from the compressed layout (used by the abstraction builder)."""
        sys = cls.__new__(cls)
        offsets = np.ascontiguousarray(offsets, dtype=np.int64)
        targets = np.ascontiguousarray(targets, dtype=np.int32)
        if validate:
            if offsets.shape != (num_states * num_inputs + 1,):
                raise ValueError("offsets has wrong length")
            if offsets[0] != 0 or offsets[-1] != targets.size:
                raise ValueError("offsets do not span targets")
            if np.any(np.diff(offsets) < 0):
                raise ValueError("offsets must be nondecreasing")
            if targets.size and (targets.min() < 0 or targets.max() >= num_states):
                raise IndexError("successor out of range")
        sys._init_from_csr(int(num_states), int(num_inputs), offsets, targets, initial)
        return sys

    def _init_from_csr(self, num_states, num_inputs, offsets, targets, initial):
        self.num_states = num_states
        self.num_inputs = num_inputs
        self._offsets = offsets
        self._targets = targets
        if initial is None:
            init = StateSet.full(num_states)
        elif isinstance(initial, StateSet):
            if initial.num_states != num_states:
                raise ValueError("initial set sized for a different system")
            init = StateSet.from_mask(initial.mask)
        else:
            init = StateSet(num_states, initial)
        self.initial = init
        self._offsets.setflags(write=False)
        self._targets.setflags(write=False)
        self.initial.mask.setflags(write=False)
        self._reverse_cache = None

    # -- basic queries -------------------------------------------------

    @property
    def pair_counts(self) -> np.ndarray:
        return np.diff(self._offsets)

    @property
    def num_transitions(self) -> int:
        return int(self._targets.size)

    def post(self, x: int, u: int) -> np.ndarray:
        """Sorted successors of x under u; empty array if u is disabled at x."""
        if not (0 <= x < self.num_states):
            raise IndexError(f"state index {x} out of range")
        if not (0 <= u < self.num_inputs):
            raise IndexError(f"input index {u} out of range")
        k = x * self.num_inputs + u
        return self._targets[self._offsets[k]:self._offsets[k + 1]]

    def enabled_inputs(self, x: int) -> np.ndarray:
        """Inputs with a non-empty successor set at x, ascending."""
        if not (0 <= x < self.num_states):
            raise IndexError(f"state index {x} out of range")
        k0 = x * self.num_inputs
        counts = np.diff(self._offsets[k0:k0 + self.num_inputs + 1])
        return np.flatnonzero(counts > 0)

    def transitions(self):
        """Iterate (x, u, successor_array) over all present pairs, in pair order."""
        for k in np.flatnonzero(self.pair_counts > 0):
            x, u = divmod(int(k), self.num_inputs)
            yield x, u, self._targets[self._offsets[k]:self._offsets[k + 1]]

    # -- restriction ---------------------------------------------------

    def restrict(self, allowed) -> "FiniteSystem":
        """Keep transition (x,u,.) iff u is allowed at x; initial set unchanged.

        `allowed` is either a mapping state -> iterable of inputs (states not
        mentioned keep nothing) or a bool array of shape (num_states, num_inputs).
        """
        if isinstance(allowed, np.ndarray):
            if allowed.shape != (self.num_states, self.num_inputs):
                raise ValueError("allowed matrix has wrong shape")
            keep = allowed.astype(bool).ravel()
        else:
            keep = np.zeros(self.num_states * self.num_inputs, dtype=bool)
            for x, inputs in allowed.items():
                x = int(x)
                if not (0 <= x < self.num_states):
                    raise IndexError(f"state index {x} out of range")
                for u in inputs:
                    u = int(u)
                    if not (0 <= u < self.num_inputs):
                        raise IndexError(f"input index {u} out of range")
                    keep[x * self.num_inputs + u] = True
        counts = self.pair_counts * keep
        offsets = np.zeros_like(self._offsets)
        np.cumsum(counts, out=offsets[1:])
        entry_keep = np.repeat(keep, self.pair_counts)
        targets = self._targets[entry_keep]
        return FiniteSystem.from_csr(self.num_states, self.num_inputs,
                                     offsets, targets, self.initial, validate=False)

    # -- reverse adjacency (used by the solvers) ------------------------

    def reverse(self):
        """Reverse adjacency: for each state s, the pair ids (x*M+u) with s in Post_u(x).

        Returns (rev_offsets, rev_pairs); entries for s live at
        rev_pairs[rev_offsets[s]:rev_offsets[s+1]]. Cached; concurrent first
        calls may compute it twice but always produce the same arrays.
        """
        if self._reverse_cache is None:
            pair_of_entry = np.repeat(
                np.arange(self.num_states * self.num_inputs, dtype=np.int64),
                self.pair_counts)
            order = np.argsort(self._targets, kind="stable")
            rev_pairs = pair_of_entry[order]
            rev_counts = np.bincount(self._targets, minlength=self.num_states)
            rev_offsets = np.zeros(self.num_states + 1, dtype=np.int64)
            np.cumsum(rev_counts, out=rev_offsets[1:])
            self._reverse_cache = (rev_offsets, rev_pairs)
        return self._reverse_cache

    def __eq__(self, other) -> bool:
        return (isinstance(other, FiniteSystem)
                and self.num_states == other.num_states
                and self.num_inputs == other.num_inputs
                and self.initial == other.initial
                and np.array_equal(self._offsets, other._offsets)
                and np.array_equal(self._targets, other._targets))

    def __repr__(self):
        return (f"FiniteSystem(states={self.num_states}, inputs={self.num_inputs}, "
                f"transitions={self.num_transitions})")


def segment_sums(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Per-segment sums of `values` under a CSR offsets array (empty segments give 0)."""
    cs = np.zeros(values.size + 1, dtype=np.int64)
    np.cumsum(values, out=cs[1:])
    return cs[offsets[1:]] - cs[offsets[:-1]]

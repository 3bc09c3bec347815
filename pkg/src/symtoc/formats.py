"""Text file formats: STS1 systems, CTL1 controllers, bounds/trace/plot CSVs.

Formats are line oriented and diff friendly; floats are written with Python
repr so every file re-parses to a structurally identical object and repeated
runs are byte identical (a timestamp comment can be suppressed).
"""

from __future__ import annotations

import math
from datetime import datetime, timezone

import numpy as np

from .abstraction import GridSpec, Quantizer
from .fts import FiniteSystem, StateSet
from .synthesis import EntryTimeTable, SymbolicController


class FormatError(ValueError):
    """Malformed system, controller or table file."""


def _timestamp_line():
    return f"# written: {datetime.now(timezone.utc).isoformat(timespec='seconds')}\n"


def _fmt_num(v) -> str:
    return repr(float(v))


def _fmt_list(values) -> str:
    return "[" + ",".join(_fmt_num(v) for v in np.atleast_1d(values)) + "]"


def _fmt_int_list(values) -> str:
    return "[" + ",".join(str(int(v)) for v in np.atleast_1d(values)) + "]"


def _parse_list(text) -> list:
    text = text.strip()
    if not (text.startswith("[") and text.endswith("]")):
        raise FormatError(f"expected bracketed list, got '{text}'")
    inner = text[1:-1].strip()
    if not inner:
        return []
    return [float(t) for t in inner.replace(",", " ").split()]


def _grid_lines(grid: GridSpec):
    yield f"# grid: tau={_fmt_num(grid.tau)} mu={_fmt_num(grid.mu)}\n"
    yield f"# grid: eta={_fmt_list(grid.eta)}\n"
    yield f"# grid: periodic={_fmt_int_list([1 if p else 0 for p in grid.periodic])}\n"
    yield f"# grid: domain_lower={_fmt_list(grid.domain_lower)}\n"
    yield f"# grid: domain_upper={_fmt_list(grid.domain_upper)}\n"
    yield f"# grid: input_lower={_fmt_list(grid.input_lower)}\n"
    yield f"# grid: input_upper={_fmt_list(grid.input_upper)}\n"


def _parse_grid_block(entries: dict) -> GridSpec | None:
    if not entries:
        return None
    needed = {"tau", "eta", "mu", "periodic", "domain_lower", "domain_upper",
              "input_lower", "input_upper"}
    missing = needed - entries.keys()
    if missing:
        raise FormatError(f"grid metadata missing keys: {sorted(missing)}")
    return GridSpec(tau=float(entries["tau"]),
                    eta=np.array(_parse_list(entries["eta"])),
                    mu=float(entries["mu"]),
                    domain_lower=np.array(_parse_list(entries["domain_lower"])),
                    domain_upper=np.array(_parse_list(entries["domain_upper"])),
                    input_lower=np.array(_parse_list(entries["input_lower"])),
                    input_upper=np.array(_parse_list(entries["input_upper"])),
                    periodic=tuple(int(v) != 0 for v in _parse_list(entries["periodic"])))


def _collect_grid_entry(line: str, entries: dict):
    body = line[len("# grid:"):].strip()
    for token in body.split():
        if "=" not in token:
            raise FormatError(f"bad grid metadata token '{token}'")
        k, v = token.split("=", 1)
        entries[k] = v


# -- STS1 system files ---------------------------------------------------

def write_system(path, sys: FiniteSystem, grid: GridSpec | None = None,
                 timestamp: bool = True):
    with open(path, "w") as fh:
        fh.write("STS1\n")
        if timestamp:
            fh.write(_timestamp_line())
        if grid is not None:
            fh.writelines(_grid_lines(grid))
        fh.write(f"states {sys.num_states}\n")
        fh.write(f"inputs {sys.num_inputs}\n")
        fh.write("initial " + " ".join(map(str, sys.initial.indices())) + "\n")
        chunks = []
        for x, u, succ in sys.transitions():
            chunks.append(f"t {x} {u} : " + " ".join(map(str, succ)) + "\n")
            if len(chunks) >= 20000:
                fh.writelines(chunks)
                chunks = []
        fh.writelines(chunks)


def parse_system(path):
    """Read an STS1 file; returns (FiniteSystem, GridSpec or None)."""
    grid_entries = {}
    num_states = num_inputs = None
    initial = None
    pair_ids = []
    succ_arrays = []
    with open(path) as fh:
        magic = fh.readline().strip()
        if magic != "STS1":
            raise FormatError(f"not an STS1 file (header '{magic}')")
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("# grid:"):
                _collect_grid_entry(line, grid_entries)
                continue
            if line.startswith("#"):
                continue
            if line.startswith("states "):
                num_states = int(line.split()[1])
                continue
            if line.startswith("inputs "):
                num_inputs = int(line.split()[1])
                continue
            if line.startswith("initial"):
                initial = [int(t) for t in line.split()[1:]]
                continue
            if line.startswith("t "):
                if num_states is None or num_inputs is None:
                    raise FormatError(f"line {lineno}: transition before states/inputs header")
                head, _, tail = line[2:].partition(":")
                parts = head.split()
                if len(parts) != 2:
                    raise FormatError(f"line {lineno}: malformed transition line")
                x, u = int(parts[0]), int(parts[1])
                succ = np.array([int(t) for t in tail.split()], dtype=np.int32)
                if succ.size == 0:
                    raise FormatError(f"line {lineno}: empty successor list")
                pair_ids.append(x * num_inputs + u)
                succ_arrays.append(succ)
                continue
            raise FormatError(f"line {lineno}: unrecognized line '{line}'")
    if num_states is None or num_inputs is None or initial is None:
        raise FormatError("missing states/inputs/initial header")
    pair_arr = np.array(pair_ids, dtype=np.int64)
    if pair_arr.size != np.unique(pair_arr).size:
        raise FormatError("duplicate (state,input) transition line")
    counts = np.zeros(num_states * num_inputs, dtype=np.int64)
    lens = np.array([a.size for a in succ_arrays], dtype=np.int64)
    if pair_arr.size:
        if pair_arr.min() < 0 or pair_arr.max() >= counts.size:
            raise FormatError("transition indices out of range")
        counts[pair_arr] = lens
    offsets = np.zeros(counts.size + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    order = np.argsort(pair_arr, kind="stable")
    targets = (np.concatenate([succ_arrays[i] for i in order])
               if succ_arrays else np.zeros(0, dtype=np.int32))
    system = FiniteSystem.from_csr(num_states, num_inputs, offsets, targets,
                                   initial=StateSet(num_states, initial))
    grid = _parse_grid_block(grid_entries)
    if grid is not None and Quantizer(grid).num_cells != num_states:
        raise FormatError("grid metadata cell count does not match the state count")
    return system, grid


# -- CTL1 controller files ------------------------------------------------

def write_controller(path, ctrl: SymbolicController, grid: GridSpec | None = None,
                     timestamp: bool = True):
    with open(path, "w") as fh:
        fh.write("CTL1\n")
        if timestamp:
            fh.write(_timestamp_line())
        if grid is not None:
            fh.writelines(_grid_lines(grid))
        fh.write(f"states {ctrl.num_states}\n")
        fh.write(f"inputs {ctrl.num_inputs}\n")
        chunks = []
        for x in np.flatnonzero(ctrl.levels <= ctrl.num_states):
            value = int(ctrl.levels[x]) - 1
            inputs = " ".join(map(str, ctrl.enabled(int(x))))
            chunks.append(f"c {x} {value} : {inputs}".rstrip() + "\n")
            if len(chunks) >= 20000:
                fh.writelines(chunks)
                chunks = []
        fh.writelines(chunks)


def parse_controller(path):
    """Read a CTL1 file; returns (SymbolicController, GridSpec or None)."""
    grid_entries = {}
    num_states = num_inputs = None
    rows = []
    with open(path) as fh:
        magic = fh.readline().strip()
        if magic != "CTL1":
            raise FormatError(f"not a CTL1 file (header '{magic}')")
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("# grid:"):
                _collect_grid_entry(line, grid_entries)
                continue
            if line.startswith("#"):
                continue
            if line.startswith("states "):
                num_states = int(line.split()[1])
                continue
            if line.startswith("inputs "):
                num_inputs = int(line.split()[1])
                continue
            if line.startswith("c "):
                head, _, tail = line[2:].partition(":")
                parts = head.split()
                if len(parts) != 2:
                    raise FormatError(f"line {lineno}: malformed controller line")
                x, value = int(parts[0]), int(parts[1])
                inputs = np.array([int(t) for t in tail.split()], dtype=np.int32)
                if value > 0 and inputs.size == 0:
                    raise FormatError(f"line {lineno}: winning state without inputs")
                rows.append((x, value, inputs))
                continue
            raise FormatError(f"line {lineno}: unrecognized line '{line}'")
    if num_states is None or num_inputs is None:
        raise FormatError("missing states/inputs header")
    levels = np.full(num_states, num_states + 1, dtype=np.int64)
    per_state = np.zeros(num_states, dtype=np.int64)
    for x, value, inputs in rows:
        if not (0 <= x < num_states):
            raise FormatError(f"controller state {x} out of range")
        levels[x] = value + 1
        per_state[x] = inputs.size
    offsets = np.zeros(num_states + 1, dtype=np.int64)
    np.cumsum(per_state, out=offsets[1:])
    enabled = np.zeros(offsets[-1], dtype=np.int32)
    worst = np.zeros(offsets[-1], dtype=np.int64)
    for x, value, inputs in rows:
        enabled[offsets[x]:offsets[x + 1]] = inputs
        worst[offsets[x]:offsets[x + 1]] = value - 1
    ctrl = SymbolicController(num_states=num_states, num_inputs=num_inputs,
                              levels=levels, offsets=offsets,
                              enabled_inputs_flat=enabled, worst_values_flat=worst)
    grid = _parse_grid_block(grid_entries)
    if grid is not None and Quantizer(grid).num_cells != num_states:
        raise FormatError("grid metadata cell count does not match the state count")
    return ctrl, grid


# -- bounds CSV ------------------------------------------------------------

def _fmt_entry_time(v) -> str:
    return "inf" if math.isinf(v) else str(int(v))


def write_bounds(path, lower: EntryTimeTable, upper: EntryTimeTable | SymbolicController,
                 timestamp: bool = True):
    lo = lower.entry_times()
    up = upper.entry_times() if isinstance(upper, EntryTimeTable) else upper.values()
    with open(path, "w") as fh:
        if timestamp:
            fh.write(_timestamp_line())
        fh.write("state,lower,upper\n")
        fh.writelines(f"{x},{_fmt_entry_time(lo[x])},{_fmt_entry_time(up[x])}\n"
                      for x in range(lo.size))


def parse_bounds(path):
    """Read a bounds CSV; returns (lower, upper) float arrays with inf sentinels."""
    lower, upper, states = [], [], []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#") or line.startswith("state,"):
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise FormatError(f"malformed bounds row '{line}'")
            states.append(int(parts[0]))
            lower.append(float(parts[1]))
            upper.append(float(parts[2]))
    n = max(states) + 1 if states else 0
    lo = np.full(n, np.inf)
    up = np.full(n, np.inf)
    lo[states] = lower
    up[states] = upper
    return lo, up


# -- trace CSV ---------------------------------------------------------------

def write_trace(path, trace, dim: int, input_dim: int, timestamp: bool = True):
    header = ("k," + ",".join(f"x{i+1}" for i in range(dim)) + ","
              + ",".join(f"u{i+1}" for i in range(input_dim)) + ",cell,value\n")
    with open(path, "w") as fh:
        if timestamp:
            fh.write(_timestamp_line())
        fh.write(header)
        for s in trace.steps:
            xs = ",".join(_fmt_num(v) for v in s.state)
            us = ",".join(_fmt_num(v) for v in s.input)
            fh.write(f"{s.k},{xs},{us},{s.cell},{s.value}\n")
        achieved = "none" if trace.achieved is None else str(trace.achieved)
        fh.write(f"# reason={trace.reason} achieved={achieved}\n")


def parse_trace(path):
    """Read a trace CSV back; returns (rows, reason, achieved).

    rows is a list of (k, state, input, cell, value) tuples mirroring what
    write_trace emitted; achieved is None when the run did not enter the target.
    """
    rows = []
    reason = None
    achieved = None
    header = None
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if line.startswith("# reason="):
                parts = dict(tok.split("=", 1) for tok in line[2:].split())
                reason = parts["reason"]
                achieved = None if parts["achieved"] == "none" else int(parts["achieved"])
                continue
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                dim = sum(1 for h in header if h.startswith("x"))
                input_dim = sum(1 for h in header if h.startswith("u"))
                continue
            parts = line.split(",")
            k = int(parts[0])
            state = np.array([float(v) for v in parts[1:1 + dim]])
            inp = np.array([float(v) for v in parts[1 + dim:1 + dim + input_dim]])
            cell = int(parts[1 + dim + input_dim])
            value = int(parts[2 + dim + input_dim])
            rows.append((k, state, inp, cell, value))
    if reason is None:
        raise FormatError("trace file has no final reason comment")
    return rows, reason, achieved


# -- controller plot CSV -------------------------------------------------------

def write_plot(path, ctrl: SymbolicController, quantizer: Quantizer | None = None,
               timestamp: bool = True):
    """One row per winning cell: center (or state id), default-policy input, value."""
    winning = np.flatnonzero(ctrl.levels <= ctrl.num_states)
    with open(path, "w") as fh:
        if timestamp:
            fh.write(_timestamp_line())
        if quantizer is None:
            fh.write("state,input,value\n")
            for x in winning:
                value = int(ctrl.levels[x]) - 1
                enabled = ctrl.enabled(int(x))
                u = "" if enabled.size == 0 else str(int(enabled[int(np.argmin(ctrl.worst_values(int(x))))]))
                fh.write(f"{x},{u},{value}\n")
            return
        grid = quantizer.grid
        dim = grid.dim
        input_dim = grid.input_dim
        inputs = grid.input_values()
        fh.write(",".join(f"x{i+1}" for i in range(dim)) + ","
                 + ",".join(f"u{i+1}" for i in range(input_dim)) + ",value\n")
        for x in winning:
            value = int(ctrl.levels[x]) - 1
            center = quantizer.center(int(x))
            enabled = ctrl.enabled(int(x))
            if enabled.size:
                uidx = int(enabled[int(np.argmin(ctrl.worst_values(int(x))))])
                us = ",".join(_fmt_num(v) for v in inputs[uidx])
            else:
                us = ",".join("" for _ in range(input_dim))
            xs = ",".join(_fmt_num(v) for v in center)
            fh.write(f"{xs},{us},{value}\n")


def parse_plot(path):
    """Read a plot CSV back; returns (header_fields, rows) with rows as lists of
    floats (empty input fields become nan) or ints for the gridless format."""
    header = None
    rows = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                continue
            parts = line.split(",")
            if header[0] == "state":
                rows.append((int(parts[0]),
                             None if parts[1] == "" else int(parts[1]),
                             int(parts[2])))
            else:
                rows.append([float("nan") if p == "" else float(p) for p in parts])
    if header is None:
        raise FormatError("plot file has no header")
    return header, rows

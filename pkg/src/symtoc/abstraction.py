"""Grid abstractions of sampled control systems and target-set lifting.

A GridSpec quantizes an axis-aligned state domain with step eta (per axis)
and the input box with step mu; each cell stands for the concrete states
within eta/2 of its center, and the quantizer maps every point to exactly
one cell (a half-up partition). The builder computes, per cell and grid
input, a reachable-set box (nominal RK4 endpoint inflated by the growth
radius) and connects the cell to every cell the quantizer can map a box
point to. Inputs whose box leaves the domain are disabled rather than
clipped, so the finite system never hides a successor.

Angular coordinates wrap: quantization, successor enumeration and target
tests are all performed on the circle for axes marked periodic.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dynamics import Model, SampledFlow, integrate, reach_radius
from .fts import FiniteSystem, StateSet

_REL_TOL = 1e-9  # index-space tolerance for half-up quantization ties
# Reachable-box corners are pulled inward by this absolute amount before
# quantization, so a corner landing exactly on a cell boundary resolves to
# the cell the attainable values actually fall in (the quantizer regions are
# half-open above; the boundary value itself belongs to the next cell but is
# only reached from states outside the source region). Absolute, so nested
# grids of different steps shave identically. Assumes coordinates and
# integration noise well above 1e-12 in magnitude.
_TIE_SHAVE = 1e-9


class OutOfDomainError(ValueError):
    """A concrete state fell outside the gridded region."""


def _axis_cell_nonperiodic(vals, lo, eta, K):
    """Nearest-center cell index per value, ties rounding half-up.

    The closed top edge (last center + eta/2) clips to the last cell; no
    range validation, callers decide how to treat out-of-range indices.
    """
    v = (np.asarray(vals, dtype=float) - lo) / eta + 0.5
    i = np.floor(v + _REL_TOL).astype(np.int64)
    return np.where((i == K) & (v <= K + _REL_TOL), K - 1, i)


def _axis_cell_periodic(vals, lo, eta, K, period):
    """Nearest-center cell index on the circle.

    Values falling in the seam gap past the last center map to whichever of
    the last and first centers is closer (first on ties)."""
    d = np.mod(np.asarray(vals, dtype=float) - lo, period)
    i = np.floor(d / eta + 0.5 + _REL_TOL).astype(np.int64)
    over = i >= K
    if np.any(over):
        d_over = d[over]
        to_first = period - d_over
        to_last = d_over - (K - 1) * eta
        i[over] = np.where(to_first <= to_last, 0, K - 1)
    return i


@dataclass(frozen=True)
class GridSpec:
    """Quantization parameters: sampling period tau, state step eta, input step mu.

    eta may be one number (uniform across coordinates) or one step per axis;
    it is stored as a per-axis vector either way.
    """
    tau: float
    eta: float
    mu: float
    domain_lower: np.ndarray
    domain_upper: np.ndarray
    input_lower: np.ndarray
    input_upper: np.ndarray
    periodic: tuple = ()

    def __post_init__(self):
        for name in ("domain_lower", "domain_upper", "input_lower", "input_upper"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if self.domain_lower.shape != self.domain_upper.shape or self.domain_lower.ndim != 1:
            raise ValueError("domain bounds must be equal-length vectors")
        if self.input_lower.shape != self.input_upper.shape or self.input_lower.ndim != 1:
            raise ValueError("input bounds must be equal-length vectors")
        eta = np.atleast_1d(np.asarray(self.eta, dtype=float))
        if eta.size == 1:
            eta = np.full(self.dim, eta[0])
        if eta.shape != (self.dim,):
            raise ValueError("eta must be one number or one step per state axis")
        object.__setattr__(self, "eta", eta)
        if self.tau <= 0 or np.any(eta <= 0) or self.mu <= 0:
            raise ValueError("tau, eta and mu must be positive")
        if np.any(self.domain_upper < self.domain_lower):
            raise ValueError("domain upper bound below lower bound")
        if np.any(self.input_upper < self.input_lower):
            raise ValueError("input upper bound below lower bound")
        per = tuple(bool(b) for b in self.periodic) or (False,) * self.dim
        if len(per) != self.dim:
            raise ValueError("periodic flags must match the state dimension")
        object.__setattr__(self, "periodic", per)
        if any(per[k] and self.domain_upper[k] <= self.domain_lower[k] for k in range(self.dim)):
            raise ValueError("periodic axes need a positive period (upper > lower)")

    @property
    def dim(self) -> int:
        return self.domain_lower.size

    @property
    def input_dim(self) -> int:
        return self.input_lower.size

    @property
    def eps(self) -> np.ndarray:
        return 0.5 * self.eta

    def periods(self) -> np.ndarray:
        return self.domain_upper - self.domain_lower

    def cells_per_axis(self) -> np.ndarray:
        span = self.domain_upper - self.domain_lower
        counts = np.empty(self.dim, dtype=np.int64)
        for k in range(self.dim):
            if self.periodic[k]:
                # exact tiling of the circle when eta divides the period
                counts[k] = max(1, int(np.ceil(span[k] / self.eta[k] - _REL_TOL)))
            else:
                counts[k] = int(np.floor(span[k] / self.eta[k] + _REL_TOL)) + 1
        return counts

    @property
    def num_cells(self) -> int:
        return int(np.prod(self.cells_per_axis()))

    def inputs_per_axis(self) -> np.ndarray:
        span = self.input_upper - self.input_lower
        return (np.floor(span / self.mu + _REL_TOL) + 1).astype(np.int64)

    @property
    def num_inputs(self) -> int:
        return int(np.prod(self.inputs_per_axis()))

    def input_values(self) -> np.ndarray:
        """All grid inputs, shape (num_inputs, input_dim), C-order over axes."""
        axes = [self.input_lower[k] + self.mu * np.arange(n)
                for k, n in enumerate(self.inputs_per_axis())]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


class Quantizer:
    """Bijection between flat cell indices and grid coordinates / cell centers."""

    def __init__(self, grid: GridSpec):
        self.grid = grid
        self.cells = grid.cells_per_axis()
        self.num_cells = int(np.prod(self.cells))
        strides = np.ones(grid.dim, dtype=np.int64)
        for k in range(grid.dim - 2, -1, -1):
            strides[k] = strides[k + 1] * self.cells[k + 1]
        self.strides = strides
        self._centers = None

    def index_to_coords(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        coords = np.empty(idx.shape + (self.grid.dim,), dtype=np.int64)
        rem = idx
        for k in range(self.grid.dim):
            coords[..., k] = rem // self.strides[k]
            rem = rem % self.strides[k]
        return coords

    def coords_to_index(self, coords) -> np.ndarray:
        coords = np.asarray(coords, dtype=np.int64)
        return (coords * self.strides).sum(axis=-1)

    def center(self, idx) -> np.ndarray:
        coords = self.index_to_coords(idx)
        return self.grid.domain_lower + self.grid.eta * coords

    def centers(self) -> np.ndarray:
        """Centers of all cells, shape (num_cells, dim); cached."""
        if self._centers is None:
            self._centers = self.center(np.arange(self.num_cells))
            self._centers.setflags(write=False)
        return self._centers

    def cell_bounds(self, idx):
        c = self.center(idx)
        h = 0.5 * self.grid.eta
        return c - h, c + h

    def quantize(self, x) -> np.ndarray | int:
        """Flat index of the cell whose center is nearest to x (ties round half-up).

        Raises OutOfDomainError when x lies outside the region covered by
        cells on a non-periodic axis.
        """
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 1
        pts = np.atleast_2d(x)
        g = self.grid
        coords = np.empty(pts.shape, dtype=np.int64)
        for k in range(g.dim):
            K = int(self.cells[k])
            lo = g.domain_lower[k]
            if g.periodic[k]:
                coords[:, k] = _axis_cell_periodic(pts[:, k], lo, g.eta[k], K,
                                                   g.domain_upper[k] - lo)
            else:
                i = _axis_cell_nonperiodic(pts[:, k], lo, g.eta[k], K)
                if np.any((i < 0) | (i >= K)):
                    bad = pts[np.flatnonzero((i < 0) | (i >= K))[0]]
                    raise OutOfDomainError(f"state {bad.tolist()} outside gridded domain (axis {k})")
                coords[:, k] = i
        flat = self.coords_to_index(coords)
        return int(flat[0]) if scalar else flat


# -- target specifications ---------------------------------------------

@dataclass(frozen=True)
class TargetBox:
    """One axis-aligned member of a target: closed interval per axis, or free."""
    lower: np.ndarray
    upper: np.ndarray
    free: tuple

    def __post_init__(self):
        object.__setattr__(self, "lower", np.atleast_1d(np.asarray(self.lower, dtype=float)))
        object.__setattr__(self, "upper", np.atleast_1d(np.asarray(self.upper, dtype=float)))
        if self.lower.shape != self.upper.shape:
            raise ValueError("box bounds must have equal length")
        fr = tuple(bool(b) for b in self.free) or (False,) * self.lower.size
        if len(fr) != self.lower.size:
            raise ValueError("free flags must match the box dimension")
        object.__setattr__(self, "free", fr)
        if any(self.upper[k] < self.lower[k] and not fr[k] for k in range(self.lower.size)):
            raise ValueError("box upper bound below lower bound")


class TargetSpec:
    """Concrete-coordinate region: a union of boxes (a ball in the max norm is a box)."""

    def __init__(self, members):
        members = tuple(members)
        if not members:
            raise ValueError("target needs at least one member")
        dim = members[0].lower.size
        if any(m.lower.size != dim for m in members):
            raise ValueError("all target members must share a dimension")
        self.members = members
        self.dim = dim

    @staticmethod
    def _free_mask(free, dim):
        mask = [False] * dim
        for d in free:
            mask[int(d)] = True
        return tuple(mask)

    @classmethod
    def box(cls, lower, upper, free=()) -> "TargetSpec":
        """Axis-aligned box; `free` lists coordinate indices left unconstrained."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        return cls([TargetBox(lower, upper, cls._free_mask(free, lower.size))])

    @classmethod
    def ball(cls, center, radius, free=()) -> "TargetSpec":
        """Ball in the max norm, which is a box; `free` as in box()."""
        center = np.atleast_1d(np.asarray(center, dtype=float))
        return cls([TargetBox(center - radius, center + radius,
                              cls._free_mask(free, center.size))])

    @classmethod
    def union(cls, *specs) -> "TargetSpec":
        members = []
        for s in specs:
            members.extend(s.members)
        return cls(members)

    def contains(self, x, grid: GridSpec | None = None) -> bool:
        """Closed membership of a concrete point, wrapping periodic axes of `grid`."""
        x = np.asarray(x, dtype=float)
        tol = 1e-12
        for m in self.members:
            ok = True
            for k in range(self.dim):
                if m.free[k]:
                    continue
                lo, hi = m.lower[k], m.upper[k]
                if grid is not None and grid.periodic[k]:
                    period = grid.domain_upper[k] - grid.domain_lower[k]
                    if hi - lo >= period - tol:
                        continue
                    d = np.mod(x[k] - lo, period)
                    if d > (hi - lo) + tol:
                        ok = False
                        break
                elif not (lo - tol <= x[k] <= hi + tol):
                    ok = False
                    break
            if ok:
                return True
        return False


def _arc_center_range(lo, hi, grid_lo, eta, K, period, tol_idx=_REL_TOL):
    """Indices i (cyclic, as (start, count)) with center angle grid_lo+i*eta in closed [lo, hi].

    Vectorized over equally-shaped lo/hi arrays. Widths >= period select all
    K indices; negative widths select none.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    w = hi - lo
    tolA = tol_idx * eta
    dlo = np.mod(lo - grid_lo, period)
    dhi = dlo + w
    s_raw = np.ceil((dlo - tolA) / eta).astype(np.int64)
    in_seam = s_raw >= K
    start = np.where(in_seam, 0, s_raw)
    e1 = np.minimum(np.floor((dhi + tolA) / eta).astype(np.int64), K - 1)
    n1 = np.where(in_seam, 0, np.maximum(0, e1 - s_raw + 1))
    wraps = dhi >= period - tolA
    e2 = np.floor((dhi - period + tolA) / eta).astype(np.int64)
    n2 = np.where(wraps, np.minimum(e2 + 1, K), 0)
    count = np.minimum(n1 + n2, K)
    count = np.where(w < -tolA, 0, count)
    count = np.where(w >= period - tolA, K, count)
    start = np.where(count == K, 0, start)
    return start, count


def _axis_ranges(grid, quantizer, member, mode):
    """Per-axis cell index lists for one target member.

    mode "over": cells whose closed box intersects the member;
    mode "under": cells whose closed box is contained in the member.
    Returns a list of index arrays, or None if the member selects nothing.
    """
    sign = 1.0 if mode == "under" else -1.0
    lists = []
    for k in range(grid.dim):
        K = int(quantizer.cells[k])
        glo = grid.domain_lower[k]
        eta = grid.eta[k]
        h = 0.5 * eta
        if member.free[k]:
            lists.append(np.arange(K))
            continue
        lo, hi = member.lower[k], member.upper[k]
        if grid.periodic[k]:
            period = grid.domain_upper[k] - glo
            if hi - lo >= period - _REL_TOL * eta:
                lists.append(np.arange(K))
                continue
            start, count = _arc_center_range(np.array([lo + sign * h]), np.array([hi - sign * h]),
                                             glo, eta, K, period)
            c = int(count[0])
            if c == 0:
                return None
            lists.append((int(start[0]) + np.arange(c)) % K)
        else:
            vlo = (lo - glo) / eta + sign * 0.5
            vhi = (hi - glo) / eta - sign * 0.5
            imin = max(0, int(np.ceil(vlo - _REL_TOL)))
            imax = min(K - 1, int(np.floor(vhi + _REL_TOL)))
            if imin > imax:
                return None
            lists.append(np.arange(imin, imax + 1))
    return lists


def _member_mask(grid, quantizer, member, mode) -> np.ndarray:
    mask = np.zeros(tuple(quantizer.cells), dtype=bool)
    lists = _axis_ranges(grid, quantizer, member, mode)
    if lists is not None:
        mask[np.ix_(*lists)] = True
    return mask.ravel()


def _linear_pieces(lo, hi, glo, period, is_periodic):
    """Decompose a (possibly circular) interval into linear pieces in [glo, glo+period]."""
    if not is_periodic:
        return [(lo, hi)]
    w = hi - lo
    if w >= period:
        return [(glo, glo + period)]
    d = np.mod(lo - glo, period)
    if d + w <= period:
        return [(glo + d, glo + d + w)]
    return [(glo + d, glo + period), (glo, glo + d + w - period)]


def _box_covered(box, member_boxes, tol):
    """Exact test: closed box covered by the union of closed member boxes."""
    for ml, mh in member_boxes:
        if all(ml[k] <= box[k][0] + tol and box[k][1] - tol <= mh[k] for k in range(len(box))):
            return True
    for ml, mh in member_boxes:
        if all(min(box[k][1], mh[k]) - max(box[k][0], ml[k]) > tol for k in range(len(box))):
            rest = []
            cur = list(box)
            for k in range(len(box)):
                lo, hi = cur[k]
                if ml[k] - lo > tol:
                    piece = list(cur)
                    piece[k] = (lo, ml[k])
                    rest.append(tuple(piece))
                    lo = ml[k]
                if hi - mh[k] > tol:
                    piece = list(cur)
                    piece[k] = (mh[k], hi)
                    rest.append(tuple(piece))
                    hi = mh[k]
                cur[k] = (lo, hi)
            return all(_box_covered(p, member_boxes, tol) for p in rest)
    return False


def target_over(grid: GridSpec, quantizer: Quantizer, spec: TargetSpec) -> StateSet:
    """Cells whose closed box intersects the target (the outer cell cover)."""
    if spec.dim != grid.dim:
        raise ValueError("target dimension does not match the grid")
    mask = np.zeros(quantizer.num_cells, dtype=bool)
    for m in spec.members:
        mask |= _member_mask(grid, quantizer, m, "over")
    return StateSet.from_mask(mask)


def target_under(grid: GridSpec, quantizer: Quantizer, spec: TargetSpec) -> StateSet:
    """Cells whose closed box lies entirely inside the target (the inner cell cover)."""
    if spec.dim != grid.dim:
        raise ValueError("target dimension does not match the grid")
    mask = np.zeros(quantizer.num_cells, dtype=bool)
    for m in spec.members:
        mask |= _member_mask(grid, quantizer, m, "under")
    if len(spec.members) > 1:
        # cells straddling members can still be jointly covered by the union
        over = np.zeros(quantizer.num_cells, dtype=bool)
        for m in spec.members:
            over |= _member_mask(grid, quantizer, m, "over")
        candidates = np.flatnonzero(over & ~mask)
        if candidates.size:
            member_boxes = _union_member_boxes(grid, spec)
            tol = _REL_TOL * float(np.max(grid.eta))
            h = 0.5 * grid.eta
            for idx in candidates:
                c = quantizer.center(int(idx))
                pieces = [()]
                for k in range(grid.dim):
                    per = grid.periodic[k]
                    period = grid.domain_upper[k] - grid.domain_lower[k]
                    ax = _linear_pieces(c[k] - h[k], c[k] + h[k], grid.domain_lower[k], period, per)
                    pieces = [p + (iv,) for p in pieces for iv in ax]
                if all(_box_covered(p, member_boxes, tol) for p in pieces):
                    mask[idx] = True
    return StateSet.from_mask(mask)


def _union_member_boxes(grid, spec):
    """Members as linear closed boxes (circular intervals split at the seam)."""
    boxes = []
    for m in spec.members:
        axis_pieces = []
        for k in range(grid.dim):
            if m.free[k]:
                axis_pieces.append([(-np.inf, np.inf)])
                continue
            per = grid.periodic[k]
            period = grid.domain_upper[k] - grid.domain_lower[k]
            axis_pieces.append(_linear_pieces(m.lower[k], m.upper[k],
                                              grid.domain_lower[k], period, per))
        combos = [()]
        for ax in axis_pieces:
            combos = [c + (iv,) for c in combos for iv in ax]
        for c in combos:
            boxes.append((np.array([iv[0] for iv in c]), np.array([iv[1] for iv in c])))
    return boxes


# -- abstraction builder -----------------------------------------------

def build_abstraction(model: Model, grid: GridSpec, flow: SampledFlow | None = None,
                      threads: int = 1, input_margin: float | None = None):
    """Finite over-approximating abstraction of the sampled dynamics on the grid.

    For every cell center and grid input the nominal endpoint is integrated
    and inflated by the growth radius at eta/2 (input-specific when the model
    provides per-input contraction data); successors are all cells the
    quantizer can map a point of the resulting box to. The input is disabled
    at a cell when the box is not contained in the domain (non-periodic
    axes). All cells are initial. Returns (FiniteSystem, Quantizer).

    input_margin, when given (the pipelines use mu/2), additionally covers
    concrete inputs within that distance of each grid input, for plants whose
    actuation is quantized; it requires the model to declare input_sensitivity.

    Per-input work may run on a thread pool; results are merged in input
    order, so the output is identical for any thread count.
    """
    if flow is None:
        flow = SampledFlow(grid.tau)
    if model.dim != grid.dim or model.input_dim != grid.input_dim:
        raise ValueError("model dimensions do not match the grid")
    if grid.num_cells == 0:
        raise ValueError("grid has no cells")
    quantizer = Quantizer(grid)
    centers = quantizer.centers()
    inputs = grid.input_values()
    n, N, M = grid.dim, quantizer.num_cells, inputs.shape[0]
    eta = grid.eta
    K = quantizer.cells
    abs_tol = _REL_TOL * eta
    eff_lo = grid.domain_lower
    last_center = grid.domain_lower + (K - 1) * eta
    eff_hi = np.minimum(grid.domain_upper, last_center + 0.5 * eta)
    margin = 0.0 if input_margin is None else float(input_margin)
    if margin > 0 and model.input_sensitivity is None:
        raise ValueError(f"model '{model.name}' declares no input_sensitivity; "
                         "an input margin cannot be covered")

    # A box corner landing exactly on a cell boundary: the bottom corner
    # always resolves to the boundary's upper cell (the boundary value is the
    # closed lower edge of that cell's region). The top corner resolves down
    # without a margin (the boundary value is only produced by states outside
    # the half-open source region) but stays inclusive with one (the covered
    # input cell is closed, so margin-induced extremes are attained).
    top_shave = -_TIE_SHAVE if margin > 0 else _TIE_SHAVE

    def job(u):
        radius = reach_radius(model, flow, grid.eps, du=margin, u=inputs[u])
        nominal = integrate(model, flow, centers, inputs[u])
        blo = nominal - radius
        bhi = nominal + radius
        enabled = np.ones(N, dtype=bool)
        starts = np.zeros((N, n), dtype=np.int64)
        counts = np.ones((N, n), dtype=np.int64)
        for k in range(n):
            lo = grid.domain_lower[k]
            if grid.periodic[k]:
                period = grid.domain_upper[k] - lo
                if 2.0 * radius[k] >= period - abs_tol[k]:
                    starts[:, k] = 0
                    counts[:, k] = K[k]
                    continue
                s = _axis_cell_periodic(blo[:, k] + _TIE_SHAVE, lo, eta[k], int(K[k]), period)
                e = _axis_cell_periodic(bhi[:, k] - top_shave, lo, eta[k], int(K[k]), period)
                starts[:, k] = s
                counts[:, k] = np.mod(e - s, K[k]) + 1
            else:
                enabled &= (blo[:, k] >= eff_lo[k] - abs_tol[k]) & (bhi[:, k] <= eff_hi[k] + abs_tol[k])
                s = np.clip(_axis_cell_nonperiodic(blo[:, k] + _TIE_SHAVE, lo, eta[k], int(K[k])), 0, K[k] - 1)
                e = np.clip(_axis_cell_nonperiodic(bhi[:, k] - top_shave, lo, eta[k], int(K[k])), 0, K[k] - 1)
                starts[:, k] = s
                counts[:, k] = np.maximum(e - s + 1, 1)
        sel = np.flatnonzero(enabled)
        starts = starts[sel]
        counts = counts[sel]
        tot = counts.prod(axis=1)
        grand = int(tot.sum())
        pair_rep = np.repeat(np.arange(sel.size), tot)
        base = np.repeat(np.cumsum(tot) - tot, tot)
        rem = np.arange(grand, dtype=np.int64) - base
        flat = np.zeros(grand, dtype=np.int64)
        for k in range(n):
            rad = counts[:, k + 1:].prod(axis=1)[pair_rep]
            digit = rem // rad
            rem = rem - digit * rad
            coord = starts[pair_rep, k] + digit
            if grid.periodic[k]:
                coord %= K[k]
            flat += coord * quantizer.strides[k]
        key = pair_rep.astype(np.int64) * N + flat
        key.sort()
        return sel, tot, (key % N).astype(np.int32)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, range(M)))
    else:
        results = [job(u) for u in range(M)]

    counts_mat = np.zeros((N, M), dtype=np.int64)
    for u, (sel, tot, _) in enumerate(results):
        counts_mat[sel, u] = tot
    offsets = np.zeros(N * M + 1, dtype=np.int64)
    np.cumsum(counts_mat.ravel(), out=offsets[1:])
    targets = np.zeros(offsets[-1], dtype=np.int32)
    for u, (sel, tot, tgt) in enumerate(results):
        if sel.size == 0:
            continue
        dst_start = offsets[sel * M + u]
        base = np.repeat(np.cumsum(tot) - tot, tot)
        dst = np.repeat(dst_start, tot) + (np.arange(tgt.size, dtype=np.int64) - base)
        targets[dst] = tgt
    system = FiniteSystem.from_csr(N, M, offsets, targets,
                                   initial=StateSet.full(N), validate=False)
    return system, quantizer

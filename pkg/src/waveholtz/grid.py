"""Cartesian grids, grid fields, and high-order discrete Laplacians.

Grids are 1D or 2D tensor products with per-axis Dirichlet or periodic
boundaries. Fields store every grid point (boundary included) plus a ghost
layer wide enough for the stencil; homogeneous Dirichlet faces are closed by
odd reflection, u(-x) = -u(x), which keeps the operator symmetric and keeps
discrete sine modes as exact eigenvectors. The spatial operator is c^2 times
the order-p approximation of the Laplacian built from the composed-difference
expansion truncated at mu = p/2 - 1 (3-point stencil at p=2, 5-point at p=4),
applied axis by axis with no cross terms.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp

__all__ = [
    "BC",
    "CartesianGrid",
    "GridField",
    "DiscreteOperator",
    "build_grid",
    "stencil_coefficients",
    "apply_operator",
    "discrete_eigenvalues_symbolic",
    "eigen_modes",
    "mode_field",
    "interior_matrix",
]


class BC(Enum):
    DIRICHLET = "dirichlet"
    PERIODIC = "periodic"


def _as_bc(value) -> BC:
    if isinstance(value, BC):
        return value
    try:
        return BC(str(value).lower())
    except ValueError:
        raise ValueError(f"unknown boundary condition {value!r}") from None


@dataclass(frozen=True)
class CartesianGrid:
    """Axis-aligned tensor-product grid.

    ``cells[m]`` counts cells on axis m, so a Dirichlet axis stores
    ``cells[m]+1`` points (both boundary points included) and a periodic axis
    stores ``cells[m]`` points (the right endpoint is identified with the
    left one).
    """

    dim: int
    bounds: tuple[tuple[float, float], ...]
    cells: tuple[int, ...]
    bcs: tuple[BC, ...]

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("only 1D and 2D grids are supported")
        for (lo, hi), n in zip(self.bounds, self.cells):
            if not hi > lo:
                raise ValueError(f"inverted or empty bounds ({lo}, {hi})")
            if n < 4:
                raise ValueError("need at least 4 cells per axis for the stencil")
        for dx, n, (lo, hi) in zip(self.spacing, self.cells, self.bounds):
            assert abs(dx * n - (hi - lo)) <= 1e-14 * (hi - lo)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((hi - lo) / n for (lo, hi), n in zip(self.bounds, self.cells))

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(hi - lo for lo, hi in self.bounds)

    @property
    def npoints(self) -> tuple[int, ...]:
        """Stored points per axis."""
        return tuple(
            n + 1 if bc is BC.DIRICHLET else n
            for n, bc in zip(self.cells, self.bcs)
        )

    @property
    def shape(self) -> tuple[int, ...]:
        return self.npoints

    @property
    def size(self) -> int:
        return int(np.prod(self.npoints))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis_coords(self, axis: int) -> np.ndarray:
        lo, _ = self.bounds[axis]
        dx = self.spacing[axis]
        return lo + dx * np.arange(self.npoints[axis])

    def coords(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays broadcast to the field shape (ij indexing)."""
        axes = [self.axis_coords(m) for m in range(self.dim)]
        return tuple(np.meshgrid(*axes, indexing="ij")) if self.dim > 1 else (axes[0],)

    def interior_slices(self) -> tuple[slice, ...]:
        return tuple(
            slice(1, -1) if bc is BC.DIRICHLET else slice(None)
            for bc in self.bcs
        )

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for axis, bc in enumerate(self.bcs):
            if bc is BC.DIRICHLET:
                idx = [slice(None)] * self.dim
                idx[axis] = 0
                mask[tuple(idx)] = True
                idx[axis] = -1
                mask[tuple(idx)] = True
        return mask

    @property
    def all_dirichlet(self) -> bool:
        return all(bc is BC.DIRICHLET for bc in self.bcs)

    @property
    def all_periodic(self) -> bool:
        return all(bc is BC.PERIODIC for bc in self.bcs)


def build_grid(dim, bounds, cells, bcs) -> CartesianGrid:
    """Build a grid from loosely-typed arguments.

    ``bounds`` may be a single (lo, hi) pair or one pair per axis; ``cells``
    an int or per-axis ints; ``bcs`` a single name, one name per axis, or a
    (low, high) pair of names per axis (periodic faces must come in matched
    pairs on an axis).
    """
    if hasattr(bounds[0], "__len__"):
        bounds_t = tuple((float(b[0]), float(b[1])) for b in bounds)
    else:
        if dim != 1:
            raise ValueError("2D grids need one (lo, hi) pair per axis")
        bounds_t = ((float(bounds[0]), float(bounds[1])),)
    if len(bounds_t) != dim:
        raise ValueError(f"expected {dim} bound pairs, got {len(bounds_t)}")

    if np.isscalar(cells):
        cells_t = (int(cells),) * dim
    else:
        cells_t = tuple(int(n) for n in cells)
    if len(cells_t) != dim:
        raise ValueError(f"expected {dim} cell counts, got {len(cells_t)}")

    if isinstance(bcs, (str, BC)):
        bcs_list = [(_as_bc(bcs), _as_bc(bcs))] * dim
    else:
        bcs_list = []
        for entry in bcs:
            if isinstance(entry, (str, BC)):
                bcs_list.append((_as_bc(entry), _as_bc(entry)))
            else:
                lo, hi = entry
                bcs_list.append((_as_bc(lo), _as_bc(hi)))
    if len(bcs_list) != dim:
        raise ValueError(f"expected {dim} boundary conditions, got {len(bcs_list)}")
    axis_bcs = []
    for lo, hi in bcs_list:
        if (lo is BC.PERIODIC) != (hi is BC.PERIODIC):
            raise ValueError("periodic faces must come in matched pairs per axis")
        axis_bcs.append(lo)

    return CartesianGrid(dim=dim, bounds=bounds_t, cells=cells_t, bcs=tuple(axis_bcs))


class GridField:
    """Field values at every stored grid point, with a managed ghost layer.

    ``values`` is a read-only view; mutate through :meth:`set_values` or the
    in-place helpers so the generation counter stays honest. The operator
    refreshes ghosts before every application, so a stale ghost layer can
    never be consumed; ``generation``/``ghost_generation`` let tests verify
    the bookkeeping.
    """

    def __init__(self, grid: CartesianGrid, ghost: int = 2, values: np.ndarray | None = None):
        if ghost < 1:
            raise ValueError("ghost layer width must be at least 1")
        self.grid = grid
        self.ghost = int(ghost)
        shape = tuple(n + 2 * ghost for n in grid.npoints)
        self._buf = np.zeros(shape, dtype=float)
        self.generation = 0
        self.ghost_generation = -1
        if values is not None:
            self.set_values(values)

    @property
    def _core(self) -> tuple[slice, ...]:
        g = self.ghost
        return tuple(slice(g, g + n) for n in self.grid.npoints)

    @property
    def values(self) -> np.ndarray:
        view = self._buf[self._core]
        view.flags.writeable = False
        return view

    def set_values(self, arr) -> "GridField":
        a = np.asarray(arr, dtype=float)
        if a.shape != self.grid.shape:
            raise ValueError(f"shape {a.shape} does not match grid {self.grid.shape}")
        buf = self._buf[self._core]
        buf.flags.writeable = True
        buf[...] = a
        self._enforce_dirichlet_zeros()
        self.generation += 1
        return self

    def _writable(self) -> np.ndarray:
        view = self._buf[self._core]
        view.flags.writeable = True
        return view

    def _touch(self):
        self.generation += 1

    def _enforce_dirichlet_zeros(self):
        core = self._buf[self._core]
        core.flags.writeable = True
        for axis, bc in enumerate(self.grid.bcs):
            if bc is BC.DIRICHLET:
                idx = [slice(None)] * self.grid.dim
                idx[axis] = 0
                core[tuple(idx)] = 0.0
                idx[axis] = -1
                core[tuple(idx)] = 0.0

    def refresh_ghosts(self) -> "GridField":
        """Fill ghosts by odd reflection (Dirichlet) or wrap-around (periodic)."""
        g = self.ghost
        buf = self._buf
        for axis, bc in enumerate(self.grid.bcs):
            n = self.grid.npoints[axis]

            def ax(idx):
                sl = [slice(None)] * self.grid.dim
                sl[axis] = idx
                return tuple(sl)

            if bc is BC.DIRICHLET:
                # mirror about the boundary point: ghost at -k*dx = -u(k*dx)
                for k in range(1, g + 1):
                    buf[ax(g - k)] = -buf[ax(g + k)]
                    buf[ax(g + n - 1 + k)] = -buf[ax(g + n - 1 - k)]
            else:
                for k in range(1, g + 1):
                    buf[ax(g - k)] = buf[ax(g + n - k)]
                    buf[ax(g + n - 1 + k)] = buf[ax(g + k - 1)]
        self.ghost_generation = self.generation
        return self

    def copy(self) -> "GridField":
        out = GridField(self.grid, self.ghost)
        out.set_values(self.values)
        return out

    def norm_2h(self) -> float:
        """Scaled l2 norm: ||u||_2 / sqrt(total grid points)."""
        return float(np.linalg.norm(self.values) / np.sqrt(self.grid.size))

    def dot_volume(self, other: "GridField") -> float:
        """Discrete inner product: cell volume times the pointwise sum."""
        return float(self.grid.cell_volume * np.vdot(self.values, other.values))

    @classmethod
    def zeros(cls, grid: CartesianGrid, ghost: int = 2) -> "GridField":
        return cls(grid, ghost)

    @classmethod
    def from_values(cls, grid: CartesianGrid, arr, ghost: int = 2) -> "GridField":
        return cls(grid, ghost, values=arr)


# --- stencils ---------------------------------------------------------------

_STENCILS = {
    2: np.array([1.0, -2.0, 1.0]),
    4: np.array([-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0]),
}


def stencil_coefficients(p: int, dx: float) -> np.ndarray:
    """1D central second-derivative stencil of order p, scaled by 1/dx^2."""
    if p not in _STENCILS:
        raise ValueError(f"unsupported order p={p}; expected 2 or 4")
    return _STENCILS[p] / dx**2


@dataclass(frozen=True)
class DiscreteOperator:
    """Order-p approximation of c^2 * Laplacian on a grid.

    Immutable and shareable; application is pure in the input field.
    """

    grid: CartesianGrid
    order: int
    c: float = 1.0

    def __post_init__(self):
        if self.order not in (2, 4):
            raise ValueError(f"unsupported order p={self.order}; expected 2 or 4")
        if not self.c > 0:
            raise ValueError("wave speed c must be positive")

    @property
    def ghost_width(self) -> int:
        return self.order // 2

    def stencil(self, axis: int) -> np.ndarray:
        return stencil_coefficients(self.order, self.grid.spacing[axis])

    def apply(self, u: GridField) -> GridField:
        if u.grid is not self.grid and u.grid != self.grid:
            raise ValueError("field grid does not match operator grid")
        if u.ghost < self.ghost_width:
            raise ValueError(
                f"field ghost width {u.ghost} < required {self.ghost_width}"
            )
        u.refresh_ghosts()
        out = GridField(self.grid, u.ghost)
        res = self._apply_buffer(u._buf, u.ghost)
        out.set_values(res)
        return out

    def apply_values(self, values: np.ndarray, ghost_scratch: np.ndarray | None = None) -> np.ndarray:
        """Apply to a raw stored-point array (ghosts filled internally)."""
        g = self.ghost_width
        buf = _padded(self.grid, values, g, out=ghost_scratch)
        res = self._apply_buffer(buf, g)
        _zero_dirichlet(self.grid, res)
        return res

    def _apply_buffer(self, buf: np.ndarray, g: int) -> np.ndarray:
        grid = self.grid
        core = tuple(slice(g, g + n) for n in grid.npoints)
        out = np.zeros(grid.shape, dtype=float)
        for axis in range(grid.dim):
            taps = self.stencil(axis)
            half = len(taps) // 2
            for k, ck in enumerate(taps):
                off = k - half
                sl = list(core)
                sl[axis] = slice(g + off, g + off + grid.npoints[axis])
                out += ck * buf[tuple(sl)]
        out *= self.c**2
        _zero_dirichlet(grid, out)
        return out


def _padded(grid: CartesianGrid, values: np.ndarray, g: int, out: np.ndarray | None = None) -> np.ndarray:
    shape = tuple(n + 2 * g for n in grid.npoints)
    buf = out if out is not None and out.shape == shape else np.empty(shape, dtype=float)
    core = tuple(slice(g, g + n) for n in grid.npoints)
    buf[core] = values
    for axis, bc in enumerate(grid.bcs):
        n = grid.npoints[axis]

        def ax(idx):
            sl = [slice(g, g + m) for m in grid.npoints]
            sl[axis] = idx
            return tuple(sl)

        if bc is BC.DIRICHLET:
            for k in range(1, g + 1):
                buf[ax(g - k)] = -buf[ax(g + k)]
                buf[ax(g + n - 1 + k)] = -buf[ax(g + n - 1 - k)]
        else:
            for k in range(1, g + 1):
                buf[ax(g - k)] = buf[ax(g + n - k)]
                buf[ax(g + n - 1 + k)] = buf[ax(g + k - 1)]
    return buf


def _zero_dirichlet(grid: CartesianGrid, arr: np.ndarray):
    for axis, bc in enumerate(grid.bcs):
        if bc is BC.DIRICHLET:
            idx = [slice(None)] * grid.dim
            idx[axis] = 0
            arr[tuple(idx)] = 0.0
            idx[axis] = -1
            arr[tuple(idx)] = 0.0


def apply_operator(op: DiscreteOperator, u: GridField) -> GridField:
    """c^2 * Laplacian_h applied to u; Dirichlet boundary rows of the result are 0."""
    return op.apply(u)


# --- symbolic eigen-decomposition -------------------------------------------

# b_mu coefficients of the composed-difference expansion; only the first two
# are needed for the supported orders.
_B_MU = (1.0, 1.0 / 12.0)


def symbol_value(p: int, theta: float | np.ndarray) -> np.ndarray:
    """Nonnegative symbol s(theta) with lambda^2 = (c/dx)^2 * s(theta)."""
    s2 = 4.0 * np.sin(np.asarray(theta) / 2.0) ** 2
    acc = np.zeros_like(s2)
    for mu in range(p // 2):
        acc += _B_MU[mu] * s2 ** (mu + 1)
    return acc


def _axis_modes(grid: CartesianGrid, axis: int, p: int, c: float):
    """Per-axis (label, lambda^2) lists for sine or real Fourier modes."""
    n = grid.cells[axis]
    dx = grid.spacing[axis]
    bc = grid.bcs[axis]
    out = []
    if bc is BC.DIRICHLET:
        for m in range(1, n):
            lam2 = (c / dx) ** 2 * symbol_value(p, m * np.pi / n)
            out.append(((m, "sin"), float(lam2)))
    else:
        out.append(((0, "cos"), 0.0))
        for m in range(1, (n + 1) // 2):
            lam2 = float((c / dx) ** 2 * symbol_value(p, 2.0 * np.pi * m / n))
            out.append(((m, "cos"), lam2))
            out.append(((m, "sin"), lam2))
        if n % 2 == 0:
            lam2 = float((c / dx) ** 2 * symbol_value(p, np.pi))
            out.append(((n // 2, "cos"), lam2))
    return out


def eigen_modes(grid: CartesianGrid, p: int, c: float = 1.0):
    """All (mode, lambda_h) pairs of the closed operator, sorted by eigenvalue.

    A mode is a tuple of per-axis labels (m, kind). Requires all-Dirichlet or
    all-periodic boundaries; 2D eigenvalues are tensor sums of the per-axis
    symbol values.
    """
    if not (grid.all_dirichlet or grid.all_periodic):
        raise ValueError("mixed boundary conditions: use the dense eigensolver oracle")
    per_axis = [_axis_modes(grid, ax, p, c) for ax in range(grid.dim)]
    modes = []
    if grid.dim == 1:
        for label, lam2 in per_axis[0]:
            modes.append(((label,), np.sqrt(lam2)))
    else:
        for lx, l2x in per_axis[0]:
            for ly, l2y in per_axis[1]:
                modes.append(((lx, ly), np.sqrt(l2x + l2y)))
    modes.sort(key=lambda t: t[1])
    return modes


def discrete_eigenvalues_symbolic(grid: CartesianGrid, p: int, c: float = 1.0) -> np.ndarray:
    """Sorted eigenvalues lambda_h >= 0 with L_ph Phi = -lambda_h^2 Phi."""
    return np.array([lam for _, lam in eigen_modes(grid, p, c)])


def mode_field(grid: CartesianGrid, mode, ghost: int = 2) -> GridField:
    """Materialize a (sine/Fourier) eigenmode, orthonormal in the volume inner product."""
    axes_vals = []
    for axis, (m, kind) in enumerate(mode):
        n = grid.cells[axis]
        length = grid.lengths[axis]
        if grid.bcs[axis] is BC.DIRICHLET:
            j = np.arange(n + 1)
            v = np.sin(m * np.pi * j / n) * np.sqrt(2.0 / length)
        else:
            j = np.arange(n)
            if kind == "cos":
                v = np.cos(2.0 * np.pi * m * j / n)
            else:
                v = np.sin(2.0 * np.pi * m * j / n)
            scale = 1.0 if (m == 0 or 2 * m == n) else 2.0
            v = v * np.sqrt(scale / length)
        axes_vals.append(v)
    vals = axes_vals[0]
    if grid.dim == 2:
        vals = np.outer(axes_vals[0], axes_vals[1])
    return GridField.from_values(grid, vals, ghost=ghost)


# --- matrix assembly (oracles and direct solves) -----------------------------


def _axis_interior_matrix(grid: CartesianGrid, axis: int, p: int) -> sp.csr_matrix:
    """1/dx^2-scaled 1D second-difference matrix on one axis (no c^2 factor)."""
    n = grid.cells[axis]
    dx = grid.spacing[axis]
    taps = stencil_coefficients(p, dx)
    half = len(taps) // 2
    if grid.bcs[axis] is BC.DIRICHLET:
        size = n - 1
        mat = sp.diags(
            [np.full(size - abs(off), taps[half + off]) for off in range(-half, half + 1) if size - abs(off) > 0],
            [off for off in range(-half, half + 1) if size - abs(off) > 0],
            shape=(size, size),
            format="lil",
        )
        if p == 4 and size >= 1:
            # odd reflection maps the ghost value to minus the first interior value
            mat[0, 0] -= taps[0]
            mat[size - 1, size - 1] -= taps[-1]
        return mat.tocsr()
    size = n
    mat = sp.lil_matrix((size, size))
    for off in range(-half, half + 1):
        ck = taps[half + off]
        for j in range(size):
            mat[j, (j + off) % size] += ck
    return mat.tocsr()


def interior_matrix(op: DiscreteOperator) -> sp.csr_matrix:
    """Assemble c^2 * Laplacian_h over non-boundary points (Dirichlet rows eliminated)."""
    grid = op.grid
    mats = [_axis_interior_matrix(grid, ax, op.order) for ax in range(grid.dim)]
    if grid.dim == 1:
        full = mats[0]
    else:
        ix = sp.identity(mats[0].shape[0], format="csr")
        iy = sp.identity(mats[1].shape[0], format="csr")
        full = sp.kron(mats[0], iy, format="csr") + sp.kron(ix, mats[1], format="csr")
    return (op.c**2 * full).tocsr()


def interior_values(grid: CartesianGrid, values: np.ndarray) -> np.ndarray:
    """Flatten the non-boundary points of a stored-point array."""
    return np.ascontiguousarray(values[grid.interior_slices()]).ravel()


def scatter_interior(grid: CartesianGrid, flat: np.ndarray) -> np.ndarray:
    """Inverse of :func:`interior_values`; boundary points are zero."""
    out = np.zeros(grid.shape, dtype=float)
    inner_shape = tuple(
        n - 2 if bc is BC.DIRICHLET else n
        for n, bc in zip(grid.npoints, grid.bcs)
    )
    out[grid.interior_slices()] = flat.reshape(inner_shape)
    return out

"""Kohn-Sham potential pieces: soft-Coulomb ions, Hartree, and LDA XC.

The effective one-body potential is V_H[rho] + V_XC[rho] + V_ion (plus any
static external well).  Ions are local soft-Coulomb centers
``-Z / sqrt(|r - R|^2 + a^2)``.  The Hartree problem is solved by direct
soft-kernel convolution in 1D and by conjugate-gradient iteration on the
finite-difference Laplacian with multipole boundary values in 3D.
Exchange-correlation is spin-unpolarized LDA: Slater exchange plus the
Perdew-Zunger 1981 correlation fit, applied pointwise with negative
round-off densities clipped to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from . import grid as gridmod
from .errors import ConfigurationError, ConvergenceError
from .grid import Grid, dipole_vector, integrate, laplacian

# Slater exchange prefactor: eps_x = -C_X rho^(1/3)
_CX = 0.75 * (3.0 / np.pi) ** (1.0 / 3.0)

# Perdew-Zunger 1981 correlation parameters (unpolarized)
_PZ_GAMMA = -0.1423
_PZ_BETA1 = 1.0529
_PZ_BETA2 = 0.3334
_PZ_A = 0.0311
_PZ_B = -0.048
_PZ_C = 0.0020
_PZ_D = -0.0116

_DENSITY_FLOOR = 1e-30


@dataclass(frozen=True)
class Ion:
    """One soft-Coulomb center: charge Z at ``position`` with softening a."""

    charge: float
    position: tuple
    softening: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(p) for p in np.atleast_1d(self.position)))
        if not self.softening > 0:
            raise ConfigurationError(f"ion softening must be positive, got {self.softening}")


@dataclass
class Density:
    """Electron density on a grid together with its nominal electron count."""

    values: np.ndarray
    grid: Grid
    n_electrons: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.grid.check_field(self.values)

    def integral(self) -> float:
        return float(integrate(self.values, self.grid))

    def normalized(self) -> "Density":
        """Rescale so the integral equals ``n_electrons`` exactly."""
        total = self.integral()
        if total <= 0:
            raise ConvergenceError("cannot normalize a non-positive density")
        return Density(self.values * (self.n_electrons / total), self.grid, self.n_electrons)


@dataclass
class ElectronSystem:
    """Static problem definition: grid, ions, occupations, model switches.

    ``occupations[m]`` is the number of electrons c_m on orbital m.
    ``harmonic_omega`` adds a well 0.5 w0^2 |r|^2 (model atoms in tests);
    ``external_potential`` adds an arbitrary static field.
    """

    grid: Grid
    ions: list = field(default_factory=list)
    occupations: np.ndarray = field(default_factory=lambda: np.array([1.0]))
    use_hartree: bool = True
    use_xc: bool = True
    ee_softening: float = 1.0
    harmonic_omega: float = 0.0
    external_potential: np.ndarray | None = None

    def __post_init__(self):
        self.occupations = np.asarray(self.occupations, dtype=float)
        if self.occupations.ndim != 1 or len(self.occupations) == 0:
            raise ConfigurationError("occupations must be a non-empty 1D sequence")
        if np.any(self.occupations < 0):
            raise ConfigurationError("orbital occupations must be non-negative")
        if not self.ee_softening > 0:
            raise ConfigurationError("ee_softening must be positive")
        half_box = [(n - 1) / 2.0 * self.grid.h for n in self.grid.shape]
        for ion in self.ions:
            pos = np.atleast_1d(ion.position)
            if len(pos) != self.grid.dim:
                raise ConfigurationError(
                    f"ion position {ion.position} has wrong dimension for a {self.grid.dim}D grid"
                )
            if any(abs(p) > hb for p, hb in zip(pos, half_box)):
                raise ConfigurationError(f"ion at {ion.position} lies outside the box")
        if self.external_potential is not None:
            self.grid.check_field(self.external_potential)

    @property
    def n_orbitals(self) -> int:
        return len(self.occupations)

    @property
    def n_electrons(self) -> float:
        return float(self.occupations.sum())


@dataclass
class KsPotential:
    """The assembled Kohn-Sham potential and its pieces (all real fields)."""

    v_hartree: np.ndarray
    v_xc: np.ndarray
    v_ion: np.ndarray
    total: np.ndarray
    e_xc: float = 0.0
    e_hartree: float = 0.0


def ionic_potential(ions, grid: Grid, extra: np.ndarray | None = None,
                    harmonic_omega: float = 0.0) -> np.ndarray:
    """Static external potential: soft-Coulomb ions plus optional extras."""
    v = np.zeros(grid.shape)
    for ion in ions:
        r2 = np.zeros(grid.shape)
        for axis in range(grid.dim):
            r2 = r2 + (grid.coordinate(axis) - ion.position[axis]) ** 2
        v -= ion.charge / np.sqrt(r2 + ion.softening**2)
    if harmonic_omega:
        r2 = sum((grid.coordinate(a)) ** 2 for a in range(grid.dim))
        v = v + 0.5 * harmonic_omega**2 * r2
    if extra is not None:
        grid.check_field(extra)
        v = v + extra
    return v


def external_potential(system: ElectronSystem) -> np.ndarray:
    return ionic_potential(system.ions, system.grid, system.external_potential,
                           system.harmonic_omega)


def _soft_kernel_1d(grid: Grid, softening: float) -> np.ndarray:
    n = grid.shape[0]
    offsets = np.arange(-(n - 1), n) * grid.h
    return 1.0 / np.sqrt(offsets**2 + softening**2)


def hartree_potential_1d(rho: np.ndarray, grid: Grid, softening: float) -> np.ndarray:
    """V_H(x) = sum_j rho(x_j) h / sqrt((x - x_j)^2 + a_ee^2)."""
    n = grid.shape[0]
    kernel = _soft_kernel_1d(grid, softening)
    full = np.convolve(np.asarray(rho, dtype=float), kernel, mode="full")
    return full[n - 1 : 2 * n - 1] * grid.h


def _multipole_boundary(rho: np.ndarray, grid: Grid, pad: int) -> np.ndarray:
    """Padded field holding monopole+dipole potential values in the pad ring."""
    charge = float(integrate(rho, grid))
    dip = dipole_vector(rho, grid)
    padded_axes = [
        (np.arange(-pad, n + pad) - (n - 1) / 2.0) * grid.h for n in grid.shape
    ]
    coords = np.meshgrid(*padded_axes, indexing="ij")
    r2 = sum(c**2 for c in coords)
    # interior values are overwritten below; clamp r there to avoid 1/0
    r = np.maximum(np.sqrt(r2), 0.5 * grid.h)
    vb = charge / r + sum(d * c for d, c in zip(dip, coords)) / r**3
    interior = tuple(slice(pad, pad + n) for n in grid.shape)
    vb[interior] = 0.0
    return vb


def hartree_potential_3d(rho: np.ndarray, grid: Grid, order: int = gridmod.DEFAULT_ORDER,
                         tol: float = 1e-8, maxiter: int = 5000) -> np.ndarray:
    """Solve -lap(V) = 4 pi rho with free-space boundary values.

    The boundary potential outside the box comes from the monopole+dipole
    expansion of rho; its stencil coupling into the box is moved to the
    right-hand side, after which conjugate gradients solve the Dirichlet
    problem on the interior.
    """
    rho = np.asarray(rho, dtype=float)
    grid.check_field(rho)
    weights = gridmod.d2_stencil(order) / grid.h**2
    pad = (len(weights) - 1) // 2

    vb = _multipole_boundary(rho, grid, pad)
    lap_b = laplacian_padded(vb, grid, weights, pad)
    b = 4.0 * np.pi * rho + lap_b

    shape = grid.shape

    def neg_lap(v):
        return -laplacian(v.reshape(shape), grid, order).ravel()

    op = LinearOperator((grid.n_points, grid.n_points), matvec=neg_lap, dtype=float)
    b_flat = b.ravel()
    x, info = cg(op, b_flat, rtol=tol, atol=0.0, maxiter=maxiter)
    if info != 0:
        residual = float(np.linalg.norm(neg_lap(x) - b_flat) / max(np.linalg.norm(b_flat), 1e-300))
        raise ConvergenceError(
            f"Poisson CG did not reach rtol={tol} in {maxiter} iterations "
            f"(relative residual {residual:.3e})",
            diagnostics={"residual": residual},
        )
    return x.reshape(shape)


def laplacian_padded(padded: np.ndarray, grid: Grid, weights: np.ndarray, pad: int) -> np.ndarray:
    """Laplacian of a padded field, evaluated on the interior points."""
    from scipy import ndimage

    out = np.zeros_like(padded)
    for axis in range(grid.dim):
        out += ndimage.correlate1d(padded, weights, axis=axis, mode="constant")
    interior = tuple(slice(pad, pad + n) for n in grid.shape)
    return out[interior]


def hartree_potential(density: Density, *, softening: float = 1.0,
                      order: int = gridmod.DEFAULT_ORDER, tol: float = 1e-8) -> np.ndarray:
    """Hartree potential of a density (kernel convolution in 1D, Poisson in 3D)."""
    g = density.grid
    if g.dim == 1:
        return hartree_potential_1d(density.values, g, softening)
    return hartree_potential_3d(density.values, g, order=order, tol=tol)


def lda_xc(density: Density) -> tuple[np.ndarray, float]:
    """LDA exchange-correlation potential and energy.

    Returns ``(v_xc, e_xc)`` with v_xc = d(e_xc)/d(rho) pointwise.  Regions
    with rho = 0 contribute nothing (continuity limit).
    """
    rho = np.clip(np.asarray(density.values, dtype=float), 0.0, None)
    mask = rho > _DENSITY_FLOOR
    v = np.zeros_like(rho)
    eps = np.zeros_like(rho)

    r = rho[mask]
    rs = (3.0 / (4.0 * np.pi * r)) ** (1.0 / 3.0)

    eps_x = -_CX * r ** (1.0 / 3.0)
    v_x = (4.0 / 3.0) * eps_x

    eps_c = np.empty_like(r)
    v_c = np.empty_like(r)
    low = rs >= 1.0
    if np.any(low):
        s = np.sqrt(rs[low])
        denom = 1.0 + _PZ_BETA1 * s + _PZ_BETA2 * rs[low]
        ec = _PZ_GAMMA / denom
        eps_c[low] = ec
        v_c[low] = ec * (1.0 + (7.0 / 6.0) * _PZ_BETA1 * s
                         + (4.0 / 3.0) * _PZ_BETA2 * rs[low]) / denom
    high = ~low
    if np.any(high):
        rsh = rs[high]
        ln = np.log(rsh)
        eps_c[high] = _PZ_A * ln + _PZ_B + _PZ_C * rsh * ln + _PZ_D * rsh
        v_c[high] = (_PZ_A * ln + (_PZ_B - _PZ_A / 3.0)
                     + (2.0 / 3.0) * _PZ_C * rsh * ln
                     + (2.0 * _PZ_D - _PZ_C) / 3.0 * rsh)

    eps[mask] = eps_x + eps_c
    v[mask] = v_x + v_c
    e_xc = float(integrate(eps * rho, density.grid))
    return v, e_xc


def assemble_ks(density: Density, system: ElectronSystem, *,
                v_ion: np.ndarray | None = None,
                poisson_tol: float = 1e-8) -> KsPotential:
    """Compose V_KS = V_H + V_XC + V_ion for the given density.

    ``v_ion`` may be passed in to avoid rebuilding the static part each
    SCF iteration.
    """
    if v_ion is None:
        v_ion = external_potential(system)
    zeros = np.zeros(system.grid.shape)
    if system.use_hartree:
        v_h = hartree_potential(density, softening=system.ee_softening, tol=poisson_tol)
        e_h = 0.5 * float(integrate(density.values * v_h, system.grid))
    else:
        v_h, e_h = zeros, 0.0
    if system.use_xc:
        v_xc, e_xc = lda_xc(density)
    else:
        v_xc, e_xc = zeros, 0.0
    total = v_h + v_xc + v_ion
    return KsPotential(v_hartree=v_h, v_xc=v_xc, v_ion=v_ion, total=total,
                       e_xc=e_xc, e_hartree=e_h)


def hartree_energy_direct_1d(rho: np.ndarray, grid: Grid, softening: float) -> float:
    """Double-sum Hartree energy oracle for small 1D grids."""
    x = grid.axis_coordinates(0)
    dx = x[:, None] - x[None, :]
    kernel = 1.0 / np.sqrt(dx**2 + softening**2)
    return 0.5 * float(rho @ kernel @ rho) * grid.h**2

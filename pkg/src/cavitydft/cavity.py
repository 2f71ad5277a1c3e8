"""Truncated photon Fock space and tensor-product orbital machinery.

An orbital of the coupled electron-photon system is stored as one complex
spatial field per retained photon number state |n>, n = 0..N_F.  The
one-body Hamiltonian acts sector-diagonal except for the bilinear coupling,
which connects n to n +- 1 through the ladder algebra

    q |n> = (1 / sqrt(2 w)) (sqrt(n) |n-1> + sqrt(n+1) |n+1>).

Couplings that would leave the retained space are dropped, which keeps the
truncated operator Hermitian.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import grid as gridmod
from .errors import ConfigurationError, GridMismatchError, UsageError
from .grid import Grid, laplacian
from .potentials import Density


@dataclass(frozen=True)
class CavityMode:
    """Single cavity mode: frequency, coupling vector, Fock truncation.

    ``coupling`` is the full polarization-weighted vector (unit vector
    times magnitude); ``n_fock`` is the highest photon number retained.
    """

    omega: float
    coupling: tuple
    n_fock: int

    def __post_init__(self):
        object.__setattr__(self, "coupling",
                           tuple(float(c) for c in np.atleast_1d(self.coupling)))
        object.__setattr__(self, "n_fock", int(self.n_fock))
        if not self.omega > 0:
            raise ConfigurationError(f"cavity frequency must be positive, got {self.omega}")
        if self.n_fock < 0:
            raise ConfigurationError(f"n_fock must be >= 0, got {self.n_fock}")

    @property
    def n_sectors(self) -> int:
        return self.n_fock + 1

    @property
    def lam(self) -> np.ndarray:
        return np.asarray(self.coupling)

    @cached_property
    def sqrt_n(self) -> np.ndarray:
        """sqrt(n) for n = 0..N_F+1; exact to double precision."""
        return np.sqrt(np.arange(self.n_fock + 2, dtype=float))

    @classmethod
    def from_effective_volume(cls, omega: float, v_eff: float, polarization, n_fock: int):
        """Coupling magnitude from a cavity volume, lam = 1/sqrt(eps0 V).

        In atomic units eps0 = 1/(4 pi).
        """
        if not v_eff > 0:
            raise ConfigurationError("effective cavity volume must be positive")
        pol = np.asarray(polarization, dtype=float)
        norm = np.linalg.norm(pol)
        if norm == 0:
            raise ConfigurationError("polarization vector must be non-zero")
        magnitude = np.sqrt(4.0 * np.pi / v_eff)
        return cls(omega=omega, coupling=tuple(magnitude * pol / norm), n_fock=n_fock)


def coupling_field(cavity: CavityMode, grid: Grid) -> np.ndarray:
    """The scalar field lam . r on the grid."""
    lam = cavity.lam
    if len(lam) != grid.dim:
        raise GridMismatchError(
            f"coupling vector has {len(lam)} components for a {grid.dim}D grid")
    out = np.zeros(grid.shape)
    for axis, la in enumerate(lam):
        if la != 0.0:
            out = out + la * grid.coordinate(axis)
    return out


@dataclass
class OrbitalSet:
    """A set of tensor-product orbitals sharing one grid.

    ``psi`` has shape ``(n_orbitals, n_sectors, *grid.shape)``; element
    ``psi[m, n]`` is the spatial field of orbital m in photon sector n.
    ``occupations[m]`` is the electron count c_m on orbital m.
    """

    psi: np.ndarray
    occupations: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)
        self.occupations = np.asarray(self.occupations, dtype=float)
        if self.psi.ndim != 2 + self.grid.dim:
            raise UsageError(
                f"orbital array must be (orbitals, sectors, grid...), got shape {self.psi.shape}")
        self.grid.check_field(self.psi)
        if len(self.occupations) != self.psi.shape[0]:
            raise UsageError("one occupation number per orbital required")

    @property
    def n_orbitals(self) -> int:
        return self.psi.shape[0]

    @property
    def n_sectors(self) -> int:
        return self.psi.shape[1]

    @property
    def n_electrons(self) -> float:
        return float(self.occupations.sum())

    def copy(self) -> "OrbitalSet":
        return OrbitalSet(self.psi.copy(), self.occupations.copy(), self.grid)

    def norms(self) -> np.ndarray:
        """Full norm of each orbital, summed over sectors and space."""
        dv = self.grid.volume_element
        axes = tuple(range(1, self.psi.ndim))
        return np.sqrt(np.sum(np.abs(self.psi) ** 2, axis=axes) * dv)

    def normalized(self) -> "OrbitalSet":
        norms = self.norms()
        if np.any(norms <= 0):
            raise UsageError("cannot normalize a zero orbital")
        shape = (-1,) + (1,) * (self.psi.ndim - 1)
        return OrbitalSet(self.psi / norms.reshape(shape), self.occupations, self.grid)

    def overlap_matrix(self) -> np.ndarray:
        """Full overlaps (Phi_m | Phi_m') including the sector sum."""
        flat = self.psi.reshape(self.n_orbitals, -1)
        return (flat.conj() @ flat.T) * self.grid.volume_element


def apply_hamiltonian(psi: np.ndarray, v_local: np.ndarray, mu: float,
                      cavity: CavityMode | None, grid: Grid, *,
                      order: int = gridmod.DEFAULT_ORDER,
                      efield: np.ndarray | None = None) -> np.ndarray:
    """Act with the coupled one-body Hamiltonian on orbital sector stacks.

    Per sector n the result is

        -1/2 lap(psi_n) + [V_local + mu (lam.r) + (n + 1/2) w + E.r] psi_n
        - sqrt(w/2) (lam.r) [sqrt(n) psi_{n-1} + sqrt(n+1) psi_{n+1}]

    where terms that reference sectors outside 0..N_F are dropped.  With
    ``cavity=None`` this reduces to the plain Kohn-Sham action on a single
    spatial stack (no sector axis handling beyond a pass-through).

    ``psi`` may have leading axes ``(orbitals, sectors)`` or just
    ``(sectors,)``; the trailing axes must match the grid.
    """
    psi = np.asarray(psi, dtype=complex)
    grid.check_field(psi)
    grid.check_field(v_local)

    v_eff = v_local
    if efield is not None:
        ef = np.asarray(efield, dtype=float)
        if np.any(ef != 0.0):
            v_eff = v_eff + sum(e * grid.coordinate(a) for a, e in enumerate(ef) if e != 0.0)

    out = -0.5 * laplacian(psi, grid, order)

    if cavity is None:
        return out + v_eff * psi

    sector_axis = psi.ndim - grid.dim - 1
    if sector_axis < 0 or psi.shape[sector_axis] != cavity.n_sectors:
        raise UsageError(
            f"expected {cavity.n_sectors} Fock sectors on axis {sector_axis}, "
            f"got shape {psi.shape}")

    lam_r = coupling_field(cavity, grid)
    if mu != 0.0:
        v_eff = v_eff + mu * lam_r
    out += v_eff * psi

    # diagonal photon energy (n + 1/2) w per sector
    n_vals = np.arange(cavity.n_sectors, dtype=float)
    diag = (n_vals + 0.5) * cavity.omega
    bshape = (1,) * sector_axis + (cavity.n_sectors,) + (1,) * grid.dim
    out += diag.reshape(bshape) * psi

    # bilinear coupling: connects n to n-1 and n+1
    if np.any(cavity.lam != 0.0) and cavity.n_fock > 0:
        sq = cavity.sqrt_n
        ladder = np.zeros_like(psi)
        lo = [slice(None)] * psi.ndim
        hi = [slice(None)] * psi.ndim
        lo[sector_axis] = slice(1, None)
        hi[sector_axis] = slice(None, -1)
        coef = sq[1:cavity.n_sectors].reshape((-1,) + (1,) * grid.dim)
        # sqrt(n) psi_{n-1} lands in sector n
        ladder[tuple(lo)] += coef * psi[tuple(hi)]
        # sqrt(n+1) psi_{n+1} lands in sector n
        ladder[tuple(hi)] += coef * psi[tuple(lo)]
        out -= np.sqrt(cavity.omega / 2.0) * lam_r * ladder

    return out


def mean_dipole_mu(density: Density, cavity: CavityMode | None) -> float:
    """mu = integral (lam . r) rho(r) dr."""
    if cavity is None:
        return 0.0
    mu = 0.0
    for axis, la in enumerate(cavity.lam):
        if la != 0.0:
            mu += la * gridmod.dipole_integral(density.values, density.grid, axis)
    return float(mu)


def sector_weights(orbitals: OrbitalSet) -> np.ndarray:
    """Occupation-weighted norm per sector, sum_m c_m <phi_mn|phi_mn>."""
    dv = orbitals.grid.volume_element
    axes = tuple(range(2, orbitals.psi.ndim))
    per = np.sum(np.abs(orbitals.psi) ** 2, axis=axes) * dv  # (m, n)
    return orbitals.occupations @ per


def photon_occupations(orbitals: OrbitalSet) -> np.ndarray:
    """Photon number probabilities P_n (non-negative, summing to one)."""
    n_el = orbitals.n_electrons
    if n_el <= 0:
        raise UsageError("photon occupations undefined for zero electrons")
    return sector_weights(orbitals) / n_el


def q_expectation(orbitals: OrbitalSet, cavity: CavityMode) -> float:
    """Displacement coordinate expectation of the orbital set.

    <q> = (1/sqrt(2 w)) sum_m c_m sum_n 2 sqrt(n+1) Re<phi_mn|phi_m,n+1>.
    """
    if orbitals.n_sectors < 2:
        return 0.0
    dv = orbitals.grid.volume_element
    axes = tuple(range(2, orbitals.psi.ndim))
    cross = np.sum(orbitals.psi[:, :-1].conj() * orbitals.psi[:, 1:], axis=axes) * dv
    sq = cavity.sqrt_n[1:orbitals.n_sectors]
    per_orbital = 2.0 * (cross.real @ sq)
    return float(orbitals.occupations @ per_orbital) / np.sqrt(2.0 * cavity.omega)


def sector_density(orbitals: OrbitalSet, n: int) -> np.ndarray:
    """Density p_n(r) = sum_m c_m |phi_mn(r)|^2 of one photon sector."""
    if not 0 <= n < orbitals.n_sectors:
        raise UsageError(f"sector {n} out of range 0..{orbitals.n_sectors - 1}")
    occ = orbitals.occupations.reshape((-1,) + (1,) * orbitals.grid.dim)
    return np.sum(occ * np.abs(orbitals.psi[:, n]) ** 2, axis=0)


def electron_density(orbitals: OrbitalSet) -> Density:
    """Total density rho = sum_n p_n."""
    occ = orbitals.occupations.reshape((-1, 1) + (1,) * orbitals.grid.dim)
    rho = np.sum(occ * np.abs(orbitals.psi) ** 2, axis=(0, 1))
    return Density(rho, orbitals.grid, orbitals.n_electrons)


def sector_dipoles(orbitals: OrbitalSet) -> np.ndarray:
    """Dipole vector of every sector density, shape (n_sectors, dim)."""
    out = np.empty((orbitals.n_sectors, orbitals.grid.dim))
    for n in range(orbitals.n_sectors):
        p = sector_density(orbitals, n)
        out[n] = gridmod.dipole_vector(p, orbitals.grid)
    return out


def annihilation_matrix(n_fock: int) -> np.ndarray:
    """Lowering operator on the truncated space, a|n> = sqrt(n)|n-1>."""
    return np.diag(np.sqrt(np.arange(1, n_fock + 1, dtype=float)), k=1)


def ladder_commutator(n_fock: int) -> np.ndarray:
    """[a, a+] on the truncated space, exact to the last bit.

    Applying the operators in sequence gives integer diagonals:
    a a+ |n> = (n+1)|n> for n < N_F and 0 for n = N_F (the |N_F+1>
    intermediate is deleted by the truncation), a+ a |n> = n|n>.  The
    commutator is the identity except the final entry, which is -N_F.
    The diagonals are built from these exact products rather than from
    floating sqrt(n) round trips, which would spoil exactness for
    non-square n.
    """
    n = np.arange(n_fock + 1, dtype=float)
    lower_after_raise = np.where(n < n_fock, n + 1.0, 0.0)
    return np.diag(lower_after_raise - n)

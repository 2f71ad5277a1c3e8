"""Self-consistent ground-state solver for cavity-coupled Kohn-Sham orbitals.

One iteration: freeze the mean-field Hamiltonian built from the current
density, improve every orbital with the chosen minimizer, re-orthogonalize
sector by sector, then mix the new density into the old one.  Convergence
requires both the energy change and the L1 density change to stay below
tolerance for two consecutive iterations.  Density mixing is damped
automatically when the energy history starts to oscillate, which is the
typical failure mode at larger couplings.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from . import grid as gridmod
from .cavity import (CavityMode, OrbitalSet, apply_hamiltonian, coupling_field,
                     electron_density, mean_dipole_mu, photon_occupations)
from .errors import ConfigurationError, ConvergenceError
from .grid import laplacian
from .potentials import (Density, ElectronSystem, KsPotential, assemble_ks,
                         external_potential)

MINIMIZERS = ("imaginary-time", "steepest-descent", "conjugate-gradient")

# deterministic fallback amplitude for linearly dependent orbital seeds
_PERTURB_AMPLITUDE = 1e-6


@dataclass
class ScfConfig:
    """Knobs for the ground-state iteration."""

    max_iterations: int = 500
    tol_energy: float = 1e-8
    tol_density: float = 1e-6
    mixing: float = 0.3
    minimizer: str = "imaginary-time"
    fixed_step: float = 0.1
    sector_weights: tuple | None = None
    inner_steps: int = 1
    fd_order: int = gridmod.DEFAULT_ORDER

    def __post_init__(self):
        if self.tol_energy <= 0 or self.tol_density <= 0:
            raise ConfigurationError("SCF tolerances must be positive")
        if not 0 < self.mixing <= 1:
            raise ConfigurationError("mixing parameter must lie in (0, 1]")
        if self.minimizer not in MINIMIZERS:
            raise ConfigurationError(
                f"unknown minimizer {self.minimizer!r}; choose one of {MINIMIZERS}")
        if self.sector_weights is not None:
            w = np.asarray(self.sector_weights, dtype=float)
            if np.any(w < 0) or not np.any(w > 0):
                raise ConfigurationError("sector weights must be non-negative, not all zero")
            self.sector_weights = tuple(float(x) for x in w)
        if self.inner_steps < 1:
            raise ConfigurationError("inner_steps must be >= 1")


@dataclass
class EnergyDecomposition:
    """Additive total-energy pieces; ``total`` is their exact sum."""

    kinetic: float
    external: float
    hartree: float
    xc: float
    photon: float
    coupling: float
    dipole_self: float
    total: float = 0.0

    def __post_init__(self):
        self.total = (self.kinetic + self.external + self.hartree + self.xc
                      + self.photon + self.coupling + self.dipole_self)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class HamiltonianContext:
    """Frozen mean-field Hamiltonian, reusable across minimizer applies."""

    grid: object
    cavity: CavityMode | None
    v_local: np.ndarray
    mu: float
    order: int = gridmod.DEFAULT_ORDER
    efield: np.ndarray | None = None

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return apply_hamiltonian(psi, self.v_local, self.mu, self.cavity,
                                 self.grid, order=self.order, efield=self.efield)

    def spectral_bound(self) -> float:
        """Gershgorin-style bound on |H|, used to cap fixed descent steps."""
        weights = gridmod.d2_stencil(self.order) / self.grid.h**2
        bound = 0.5 * float(np.sum(np.abs(weights))) * self.grid.dim
        v = self.v_local
        if self.cavity is not None:
            lam_r = coupling_field(self.cavity, self.grid)
            v = v + self.mu * lam_r
            bound += (self.cavity.n_fock + 0.5) * self.cavity.omega
            bound += (np.sqrt(self.cavity.omega / 2.0) * float(np.max(np.abs(lam_r)))
                      * 2.0 * np.sqrt(self.cavity.n_fock + 1.0))
        bound += float(np.max(np.abs(v)))
        return bound


@dataclass
class ScfState:
    """Result of a ground-state solve."""

    orbitals: OrbitalSet
    density: Density
    potential: KsPotential
    mu: float
    cavity: CavityMode | None
    system: ElectronSystem
    energy: EnergyDecomposition
    iterations: int
    converged: bool
    history: list = field(default_factory=list)

    @property
    def occupations_photon(self) -> np.ndarray:
        if self.cavity is None:
            return np.array([1.0])
        return photon_occupations(self.orbitals)

    @property
    def truncation_suspect(self) -> bool:
        """True when P_n fails to decay with n.

        A non-decaying photon distribution means the retained Fock space is
        too small for the state (for example deep in the ultrastrong
        regime); results should be re-checked with a larger n_fock.
        """
        p = self.occupations_photon
        return bool(np.any(np.diff(p) > 0.0))


def default_sector_weights(n_sectors: int) -> np.ndarray:
    """Geometric decay (1, 0.1, 0.01, ...) favoring the low photon sectors."""
    return 0.1 ** np.arange(n_sectors, dtype=float)


def _monomial_powers(dim: int):
    """Graded enumeration of monomial exponents used for orbital seeds."""
    degree = 0
    while True:
        if dim == 1:
            yield (degree,)
        else:
            for i in range(degree + 1):
                for j in range(degree - i + 1):
                    yield (i, j, degree - i - j)
        degree += 1


def _checkerboard(grid) -> np.ndarray:
    """Fixed +-1 pattern used to break exact linear dependence."""
    pattern = np.zeros(grid.shape)
    idx = np.indices(grid.shape).sum(axis=0)
    pattern[:] = np.where(idx % 2 == 0, 1.0, -1.0)
    return pattern


def init_orbitals(system: ElectronSystem, cavity: CavityMode | None,
                  cfg: ScfConfig) -> OrbitalSet:
    """Gaussian atomic-like seeds, sector-weighted and orthonormalized."""
    grid = system.grid
    n_orb = system.n_orbitals
    if n_orb > grid.n_points:
        raise ConfigurationError(
            f"{n_orb} orbitals cannot be represented on {grid.n_points} grid points")
    n_sectors = cavity.n_sectors if cavity is not None else 1
    weights = (np.asarray(cfg.sector_weights, dtype=float)
               if cfg.sector_weights is not None else default_sector_weights(n_sectors))
    if len(weights) < n_sectors:
        weights = np.concatenate([weights, np.zeros(n_sectors - len(weights))])
    weights = weights[:n_sectors]
    if not np.any(weights > 0):
        raise ConfigurationError("initial sector weights vanish on every retained sector")

    centers = [np.atleast_1d(ion.position) for ion in system.ions]
    if not centers:
        centers = [np.zeros(grid.dim)]
    if system.harmonic_omega > 0:
        width = 1.0 / np.sqrt(system.harmonic_omega)
    else:
        width = max((ion.softening for ion in system.ions), default=1.0)

    gen = _monomial_powers(grid.dim)
    n_levels = (n_orb + len(centers) - 1) // len(centers)
    powers = [next(gen) for _ in range(n_levels)]
    seeds = np.empty((n_orb,) + grid.shape)
    for m in range(n_orb):
        center = centers[m % len(centers)]
        pw = powers[m // len(centers)]
        r2 = np.zeros(grid.shape)
        poly = np.ones(grid.shape)
        for axis in range(grid.dim):
            d = grid.coordinate(axis) - center[axis]
            r2 = r2 + d**2
            if pw[axis]:
                poly = poly * d ** pw[axis]
        seeds[m] = poly * np.exp(-r2 / (2.0 * width**2))

    psi = seeds[:, None, ...] * weights.reshape((1, -1) + (1,) * grid.dim)
    orbitals = OrbitalSet(psi.astype(complex), system.occupations, grid)
    return gram_schmidt_sectorwise(orbitals)


def gram_schmidt_sectorwise(orbitals: OrbitalSet, *, passes: int = 2,
                            max_retries: int = 2) -> OrbitalSet:
    """Orthonormalize a set: project per Fock sector, normalize globally.

    For every sector n the spatial components of orbital m are made
    orthogonal to those of all earlier orbitals without per-sector
    rescaling; afterwards each full orbital is normalized over sectors
    and space.  The resulting full overlap matrix is the identity.
    Linearly dependent inputs are perturbed by a fixed checkerboard
    pattern and retried.
    """
    grid = orbitals.grid
    dv = grid.volume_element
    n_orb, n_sec = orbitals.n_orbitals, orbitals.n_sectors
    work = orbitals.psi.reshape(n_orb, n_sec, -1).copy()
    board = None

    for attempt in range(max_retries + 1):
        dependent = False
        for _ in range(passes):
            for m in range(n_orb):
                for j in range(m):
                    denom = np.einsum("sp,sp->s", work[j].conj(), work[j]).real * dv
                    numer = np.einsum("sp,sp->s", work[j].conj(), work[m]) * dv
                    safe = denom > 1e-30
                    coef = np.where(safe, numer / np.where(safe, denom, 1.0), 0.0)
                    work[m] -= coef[:, None] * work[j]
        norms = np.sqrt(np.einsum("msp,msp->m", work.conj(), work).real * dv)
        if np.any(norms < 1e-10):
            dependent = True
        if not dependent:
            break
        if attempt == max_retries:
            raise ConvergenceError(
                "orbitals remain linearly dependent after deterministic perturbation")
        if board is None:
            board = _checkerboard(grid).ravel()
        for m in np.nonzero(norms < 1e-10)[0]:
            work[m] = orbitals.psi.reshape(n_orb, n_sec, -1)[m]
            work[m, 0] += _PERTURB_AMPLITUDE * (m + 1) * board

    psi = (work / norms[:, None, None]).reshape(orbitals.psi.shape)
    return OrbitalSet(psi, orbitals.occupations, grid)


class _Minimizer:
    """Per-orbital update strategies for one frozen-Hamiltonian step."""

    def __init__(self, kind: str, fixed_step: float, n_orbitals: int):
        self.kind = kind
        self.fixed_step = fixed_step
        self.prev_grad = [None] * n_orbitals
        self.prev_dir = [None] * n_orbitals

    def step(self, orbitals: OrbitalSet, ctx: HamiltonianContext) -> np.ndarray:
        psi = orbitals.psi
        h_psi = ctx.apply(psi)
        if self.kind == "steepest-descent":
            return self._steepest(orbitals, h_psi, ctx)
        if self.kind == "imaginary-time":
            return self._imaginary_time(orbitals, h_psi, ctx)
        return self._conjugate_gradient(orbitals, h_psi, ctx)

    @staticmethod
    def _moments(orbitals, h_psi, h2_psi=None):
        dv = orbitals.grid.volume_element
        flat = orbitals.psi.reshape(orbitals.n_orbitals, -1)
        w = h_psi.reshape(orbitals.n_orbitals, -1)
        m1 = np.einsum("mp,mp->m", flat.conj(), w).real * dv
        m2 = np.einsum("mp,mp->m", w.conj(), w).real * dv
        if h2_psi is None:
            return m1, m2, None
        hw = h2_psi.reshape(orbitals.n_orbitals, -1)
        m3 = np.einsum("mp,mp->m", w.conj(), hw).real * dv
        return m1, m2, m3

    def _steepest(self, orbitals, h_psi, ctx):
        # fixed step, capped well inside the stability bound 2/|H|
        tau = min(self.fixed_step, 1.5 / ctx.spectral_bound())
        m1, _, _ = self._moments(orbitals, h_psi)
        shape = (-1,) + (1,) * (orbitals.psi.ndim - 1)
        grad = h_psi - m1.reshape(shape) * orbitals.psi
        return orbitals.psi - tau * grad

    def _imaginary_time(self, orbitals, h_psi, ctx):
        # minimize the Rayleigh quotient of (1 - tau H) phi over tau per orbital
        h2_psi = ctx.apply(h_psi)
        m1, m2, m3 = self._moments(orbitals, h_psi, h2_psi)
        taus = np.full(orbitals.n_orbitals, self.fixed_step)
        for m in range(orbitals.n_orbitals):
            a = m2[m] ** 2 - m1[m] * m3[m]
            b = m3[m] - m1[m] * m2[m]
            c = m1[m] ** 2 - m2[m]
            candidates = []
            if abs(a) > 1e-300:
                disc = b * b - 4.0 * a * c
                if disc >= 0:
                    root = np.sqrt(disc)
                    candidates = [(-b + root) / (2 * a), (-b - root) / (2 * a)]
            elif abs(b) > 1e-300:
                candidates = [-c / b]
            best, best_e = None, None
            for tau in candidates:
                if not np.isfinite(tau) or tau <= 0:
                    continue
                denom = 1.0 - 2.0 * tau * m1[m] + tau**2 * m2[m]
                if denom <= 1e-12:
                    continue
                e = (m1[m] - 2.0 * tau * m2[m] + tau**2 * m3[m]) / denom
                if best_e is None or e < best_e:
                    best, best_e = tau, e
            if best is not None:
                taus[m] = best
        shape = (-1,) + (1,) * (orbitals.psi.ndim - 1)
        return orbitals.psi - taus.reshape(shape) * h_psi

    def _conjugate_gradient(self, orbitals, h_psi, ctx):
        dv = orbitals.grid.volume_element
        psi = orbitals.psi
        new = np.empty_like(psi)
        dirs = np.empty_like(psi)
        m1, _, _ = self._moments(orbitals, h_psi)
        shape = (1,) * (psi.ndim - 1)
        grads = h_psi - m1.reshape((-1,) + shape) * psi
        for m in range(orbitals.n_orbitals):
            g = grads[m]
            gg = np.vdot(g, g).real * dv
            d = -g
            if self.prev_dir[m] is not None and self.prev_grad[m] > 1e-300:
                beta = gg / self.prev_grad[m]
                d = d + beta * self.prev_dir[m]
            # keep the search direction orthogonal to the current orbital
            d = d - (np.vdot(psi[m], d) * dv) * psi[m]
            self.prev_grad[m] = gg
            self.prev_dir[m] = d
            dn = np.sqrt(np.vdot(d, d).real * dv)
            dirs[m] = d / dn if dn > 1e-150 else 0.0 * d
        h_d = ctx.apply(dirs)
        for m in range(orbitals.n_orbitals):
            if not np.any(dirs[m]):
                new[m] = psi[m]
                continue
            h11 = m1[m]
            h12 = np.vdot(psi[m], h_d[m]) * dv
            h22 = (np.vdot(dirs[m], h_d[m]) * dv).real
            hmat = np.array([[h11, h12], [np.conj(h12), h22]])
            vals, vecs = np.linalg.eigh(hmat)
            alpha, beta = vecs[:, 0]
            new[m] = alpha * psi[m] + beta * dirs[m]
        return new


def total_energy(system: ElectronSystem, orbitals: OrbitalSet,
                 cavity: CavityMode | None, *,
                 potential: KsPotential | None = None,
                 fd_order: int = gridmod.DEFAULT_ORDER) -> EnergyDecomposition:
    """Energy of an orbital set, decomposed into additive pieces.

    The photon energy counts the mode once, w * sum_n (n + 1/2) P_n, and
    the mean-field dipole self-interaction enters as mu^2 / 2, so the sum
    reduces to the bare Kohn-Sham energy plus w/2 when the coupling is
    switched off.
    """
    grid = system.grid
    dv = grid.volume_element
    psi = orbitals.psi
    occ = orbitals.occupations

    lap = laplacian(psi, grid, fd_order)
    flat = psi.reshape(orbitals.n_orbitals, -1)
    per_orb = -0.5 * np.einsum("mp,mp->m", flat.conj(),
                               lap.reshape(orbitals.n_orbitals, -1)).real * dv
    e_kin = float(occ @ per_orb)

    rho = electron_density(orbitals)
    if potential is not None:
        v_ion = potential.v_ion
    else:
        v_ion = external_potential(system)
    e_ext = float(np.sum(rho.values * v_ion)) * dv

    if system.use_hartree:
        from .potentials import hartree_potential
        v_h = hartree_potential(rho, softening=system.ee_softening)
        e_h = 0.5 * float(np.sum(rho.values * v_h)) * dv
    else:
        e_h = 0.0
    if system.use_xc:
        from .potentials import lda_xc
        _, e_xc = lda_xc(rho)
    else:
        e_xc = 0.0

    if cavity is None:
        return EnergyDecomposition(e_kin, e_ext, e_h, e_xc, 0.0, 0.0, 0.0)

    pn = photon_occupations(orbitals)
    e_photon = cavity.omega * float(np.sum((np.arange(len(pn)) + 0.5) * pn))

    mu = mean_dipole_mu(rho, cavity)
    e_dsi = 0.5 * mu * mu

    e_coup = 0.0
    if orbitals.n_sectors > 1 and np.any(cavity.lam != 0.0):
        lam_r = coupling_field(cavity, grid)
        axes = tuple(range(2, psi.ndim))
        cross = np.sum(psi[:, :-1].conj() * lam_r * psi[:, 1:], axis=axes) * dv
        sq = cavity.sqrt_n[1:orbitals.n_sectors]
        per = 2.0 * (cross.real @ sq)
        e_coup = -np.sqrt(cavity.omega / 2.0) * float(occ @ per)

    return EnergyDecomposition(e_kin, e_ext, e_h, e_xc, e_photon, e_coup, e_dsi)


def orbital_eigenvalues(orbitals: OrbitalSet, ctx: HamiltonianContext) -> np.ndarray:
    """Expectation values <Phi_m|H|Phi_m> under the frozen Hamiltonian."""
    h_psi = ctx.apply(orbitals.psi)
    dv = orbitals.grid.volume_element
    flat = orbitals.psi.reshape(orbitals.n_orbitals, -1)
    w = h_psi.reshape(orbitals.n_orbitals, -1)
    return np.einsum("mp,mp->m", flat.conj(), w).real * dv


def _oscillation_count(deltas) -> int:
    signs = np.sign([d for d in deltas if d != 0.0])
    return int(np.sum(signs[1:] * signs[:-1] < 0))


def _alternating(values) -> bool:
    """True when the last four entries zig-zag (a period-2 cycle)."""
    if len(values) < 4:
        return False
    d = np.diff(values[-4:])
    return bool(d[0] * d[1] < 0 and d[1] * d[2] < 0)


def state_from_orbitals(system: ElectronSystem, cavity: CavityMode | None,
                        orbitals: OrbitalSet) -> ScfState:
    """Rebuild a full state (density, potential, energy) from orbitals."""
    rho = electron_density(orbitals)
    pot = assemble_ks(rho, system)
    mu = mean_dipole_mu(rho, cavity)
    energy = total_energy(system, orbitals, cavity)
    return ScfState(orbitals=orbitals, density=rho, potential=pot, mu=mu,
                    cavity=cavity, system=system, energy=energy,
                    iterations=0, converged=True, history=[])


def scf_solve(system: ElectronSystem, cavity: CavityMode | None,
              cfg: ScfConfig | None = None, *,
              initial_orbitals: OrbitalSet | None = None,
              log=None) -> ScfState:
    """Run the ground-state iteration to self-consistency.

    ``log``, when given, receives one tab-separated line per iteration:
    iteration, total energy, energy change, L1 density change, and the
    photon occupations.
    """
    cfg = cfg or ScfConfig()
    grid = system.grid
    v_ion = external_potential(system)
    orbitals = initial_orbitals if initial_orbitals is not None else init_orbitals(
        system, cavity, cfg)
    orbitals = gram_schmidt_sectorwise(orbitals)

    minimizer = _Minimizer(cfg.minimizer, cfg.fixed_step, orbitals.n_orbitals)
    rho_in = electron_density(orbitals).values
    mixing = cfg.mixing
    energy_prev = None
    history = []
    deltas = []
    rho_deltas = []
    streak = 0
    halvings = 0
    calm = 0
    rho_at_halving = np.inf
    converged = False
    iteration = 0

    for iteration in range(1, cfg.max_iterations + 1):
        density_in = Density(rho_in, grid, system.n_electrons)
        pot = assemble_ks(density_in, system, v_ion=v_ion)
        mu = mean_dipole_mu(density_in, cavity)
        ctx = HamiltonianContext(grid, cavity, pot.total, mu, cfg.fd_order)

        for _ in range(cfg.inner_steps):
            psi_new = minimizer.step(orbitals, ctx)
            orbitals = gram_schmidt_sectorwise(
                OrbitalSet(psi_new, orbitals.occupations, grid))

        rho_out = electron_density(orbitals).values
        energy = total_energy(system, orbitals, cavity, fd_order=cfg.fd_order)
        d_e = np.inf if energy_prev is None else energy.total - energy_prev
        d_rho = float(np.sum(np.abs(rho_out - rho_in))) * grid.volume_element
        pn = photon_occupations(orbitals) if cavity is not None else np.array([1.0])

        history.append({"iteration": iteration, "energy": energy.total,
                        "delta_energy": d_e, "delta_density": d_rho,
                        "mixing": mixing})
        if log is not None:
            cols = [str(iteration), f"{energy.total:.12e}", f"{d_e:.3e}",
                    f"{d_rho:.3e}"] + [f"{p:.6e}" for p in pn]
            log("\t".join(cols))

        # damp the mixing when the energy history alternates in sign or the
        # density residual settles into a period-2 cycle; changes at the
        # convergence noise floor do not count, and a calm stretch restores
        # the damping toward the configured value
        rho_deltas.append(d_rho)
        oscillating = False
        if np.isfinite(d_e) and abs(d_e) > 10.0 * cfg.tol_energy:
            deltas.append(d_e)
            oscillating = len(deltas) >= 4 and _oscillation_count(deltas[-4:]) == 3
        if d_rho > 10.0 * cfg.tol_density and _alternating(rho_deltas):
            oscillating = True
        if oscillating:
            mixing = max(mixing / 2.0, 0.02)
            halvings += 1
            calm = 0
            rho_at_halving = d_rho
            deltas.clear()
            rho_deltas.clear()
        else:
            calm += 1
        # restore damping only once the residual shows real progress
        if (calm >= 25 and mixing < cfg.mixing
                and d_rho < 0.5 * rho_at_halving):
            mixing = min(2.0 * mixing, cfg.mixing)
            calm = 0

        if abs(d_e) < cfg.tol_energy and d_rho < cfg.tol_density:
            streak += 1
            if streak >= 2:
                converged = True
        else:
            streak = 0
        if converged:
            break

        energy_prev = energy.total
        rho_in = (1.0 - mixing) * rho_in + mixing * rho_out

    if not converged:
        diag = {
            "oscillations": _oscillation_count([h["delta_energy"] for h in history[1:]]),
            "mixing_halvings": halvings,
            "final_mixing": mixing,
            "last_delta_energy": history[-1]["delta_energy"] if history else None,
            "last_delta_density": history[-1]["delta_density"] if history else None,
        }
        raise ConvergenceError(
            f"SCF did not converge in {cfg.max_iterations} iterations "
            f"(|dE|={diag['last_delta_energy']:.3e}, L1(drho)={diag['last_delta_density']:.3e}, "
            f"{diag['oscillations']} energy-sign oscillations, "
            f"{halvings} mixing halvings)",
            history=history, diagnostics=diag)

    rho_final = electron_density(orbitals)
    pot_final = assemble_ks(rho_final, system, v_ion=v_ion)
    mu_final = mean_dipole_mu(rho_final, cavity)
    energy_final = total_energy(system, orbitals, cavity, fd_order=cfg.fd_order)
    return ScfState(orbitals=orbitals, density=rho_final, potential=pot_final,
                    mu=mu_final, cavity=cavity, system=system,
                    energy=energy_final, iterations=iteration,
                    converged=True, history=history)

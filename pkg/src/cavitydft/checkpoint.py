"""Versioned binary checkpoints for orbital sets.

Layout (little-endian throughout): an 8-byte magic string, a version
integer, grid and cavity metadata, then the raw orbital, density, and
occupation arrays in C order.  Round trips are bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .cavity import CavityMode, OrbitalSet
from .errors import UsageError
from .grid import Grid

MAGIC = b"CVDFTCHK"
VERSION = 1

_HEAD = struct.Struct("<8sI")
_GEOM = struct.Struct("<Id3q")          # dim, h, shape (padded to 3)
_CAV = struct.Struct("<Bd3dI")          # has_cavity, omega, lambda (padded), n_fock
_STATE = struct.Struct("<IIdQd")        # n_orbitals, n_sectors, time, iteration, mu


@dataclass
class Checkpoint:
    """Snapshot of an orbital set plus enough metadata to resume."""

    orbitals: OrbitalSet
    cavity: CavityMode | None
    mu: float = 0.0
    time: float = 0.0
    iteration: int = 0


def save_checkpoint(path, chk: Checkpoint) -> None:
    orb = chk.orbitals
    grid = orb.grid
    shape3 = list(grid.shape) + [0] * (3 - grid.dim)
    lam3 = ([*chk.cavity.lam] if chk.cavity is not None else []) + [0.0] * 3
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, VERSION))
        fh.write(_GEOM.pack(grid.dim, grid.h, *shape3[:3]))
        fh.write(_CAV.pack(
            1 if chk.cavity is not None else 0,
            chk.cavity.omega if chk.cavity is not None else 0.0,
            *lam3[:3],
            chk.cavity.n_fock if chk.cavity is not None else 0))
        fh.write(_STATE.pack(orb.n_orbitals, orb.n_sectors, chk.time,
                             chk.iteration, chk.mu))
        fh.write(np.ascontiguousarray(orb.occupations, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(orb.psi, dtype="<c16").tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic, version = _HEAD.unpack(fh.read(_HEAD.size))
        if magic != MAGIC:
            raise UsageError(f"{path} is not a cavitydft checkpoint")
        if version != VERSION:
            raise UsageError(f"unsupported checkpoint version {version}")
        dim, h, *shape3 = _GEOM.unpack(fh.read(_GEOM.size))
        grid = Grid(tuple(shape3[:dim]), h)
        has_cav, omega, lx, ly, lz, n_fock = _CAV.unpack(fh.read(_CAV.size))
        cavity = None
        if has_cav:
            cavity = CavityMode(omega=omega, coupling=tuple([lx, ly, lz][:dim]),
                                n_fock=n_fock)
        n_orb, n_sec, time, iteration, mu = _STATE.unpack(fh.read(_STATE.size))
        occ = np.frombuffer(fh.read(8 * n_orb), dtype="<f8").copy()
        count = n_orb * n_sec * grid.n_points
        psi = np.frombuffer(fh.read(16 * count), dtype="<c16").copy()
        psi = psi.reshape((n_orb, n_sec) + grid.shape)
    orbitals = OrbitalSet(psi, occ, grid)
    return Checkpoint(orbitals=orbitals, cavity=cavity, mu=mu, time=time,
                      iteration=iteration)

import subprocess
import sys

import numpy as np
import pytest

from cavitydft.cavity import CavityMode, OrbitalSet
from cavitydft.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from cavitydft.config import parse_config
from cavitydft.errors import ConfigurationError, UsageError
from cavitydft.grid import Grid
from cavitydft.timeseries import TimeSeries

MINIMAL = """
[system]
dim = 1
points = 61
spacing = 0.4
occupations = 1.0
ions =
    1.0  0.0  1.0
"""

FULL = MINIMAL + """
[cavity]
omega = 0.08
lambda = 0.05
n_fock = 2

[scf]
max_iterations = 500
tol_energy = 1e-9
tol_density = 1e-7

[prop]
dt = 0.05
n_steps = 100
kick_strength = 0.001

[spectra]
omega_min = 0.0
omega_max = 0.4
omega_step = 0.001

[output]
prefix = demo
"""


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestParseConfig:
    def test_minimal_config_defaults(self, tmp_path):
        cfg = parse_config(write(tmp_path, MINIMAL))
        assert cfg.grid == Grid((61,), 0.4)
        assert cfg.cavity is None
        assert cfg.system.use_hartree and cfg.system.use_xc
        assert cfg.scf.mixing == 0.3
        assert cfg.spectra.omega_step == 1e-3
        assert cfg.prefix == "run"

    def test_full_config(self, tmp_path):
        cfg = parse_config(write(tmp_path, FULL))
        assert cfg.cavity.omega == 0.08
        assert cfg.cavity.lam[0] == 0.05
        assert cfg.prop.kick_strength == 0.001
        assert cfg.prefix == "demo"

    def test_unknown_key_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError) as err:
            parse_config(write(tmp_path, MINIMAL + "\n[scf]\nmaxiter = 3\n"))
        assert any("maxiter" in v for v in err.value.violations)

    def test_unknown_section_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError):
            parse_config(write(tmp_path, MINIMAL + "\n[solver]\nx = 1\n"))

    def test_all_violations_reported(self, tmp_path):
        bad = """
[system]
dim = 2
points = 61
spacing = -0.4
occupations = 1.0
"""
        with pytest.raises(ConfigurationError) as err:
            parse_config(write(tmp_path, bad))
        text = "\n".join(err.value.violations)
        assert "dim" in text and "spacing" in text.lower()

    def test_missing_required_keys_enumerated(self, tmp_path):
        with pytest.raises(ConfigurationError) as err:
            parse_config(write(tmp_path, "[system]\ndim = 1\n"))
        text = "\n".join(err.value.violations)
        assert "points" in text and "spacing" in text and "occupations" in text

    def test_negative_dt_named(self, tmp_path):
        text = FULL.replace("dt = 0.05", "dt = -0.05")
        with pytest.raises(ConfigurationError) as err:
            parse_config(write(tmp_path, text))
        assert any("prop" in v for v in err.value.violations)

    def test_effective_volume_coupling(self, tmp_path):
        text = MINIMAL + """
[cavity]
omega = 0.1
v_eff = 800.0
polarization = 1.0
n_fock = 1
"""
        cfg = parse_config(write(tmp_path, text))
        # lam = 1/sqrt(eps0 V) with eps0 = 1/(4 pi)
        assert cfg.cavity.lam[0] == pytest.approx(np.sqrt(4 * np.pi / 800.0))

    def test_lambda_and_veff_conflict(self, tmp_path):
        text = MINIMAL + """
[cavity]
omega = 0.1
lambda = 0.05
v_eff = 800.0
n_fock = 1
"""
        with pytest.raises(ConfigurationError):
            parse_config(write(tmp_path, text))

    def test_ion_line_errors_located(self, tmp_path):
        bad = MINIMAL.replace("1.0  0.0  1.0", "1.0  0.0")
        with pytest.raises(ConfigurationError) as err:
            parse_config(write(tmp_path, bad))
        assert any("ions line" in v for v in err.value.violations)

    def test_3d_points_expansion(self, tmp_path):
        text = """
[system]
dim = 3
points = 9
spacing = 0.5
occupations = 2.0
"""
        cfg = parse_config(write(tmp_path, text))
        assert cfg.grid.shape == (9, 9, 9)


class TestCheckpoint:
    def _orbitals(self):
        g = Grid((31,), 0.3)
        rng = np.random.default_rng(17)
        psi = rng.standard_normal((2, 3) + g.shape) \
            + 1j * rng.standard_normal((2, 3) + g.shape)
        return OrbitalSet(psi, [2.0, 1.0], g)

    def test_roundtrip_bit_exact(self, tmp_path):
        orbs = self._orbitals()
        cav = CavityMode(omega=0.08, coupling=(0.05,), n_fock=2)
        path = tmp_path / "state.chk"
        save_checkpoint(path, Checkpoint(orbitals=orbs, cavity=cav, mu=0.123,
                                         time=4.5, iteration=77))
        loaded = load_checkpoint(path)
        assert np.array_equal(loaded.orbitals.psi, orbs.psi)
        assert np.array_equal(loaded.orbitals.occupations, orbs.occupations)
        assert loaded.orbitals.grid == orbs.grid
        assert loaded.cavity == cav
        assert loaded.mu == 0.123 and loaded.time == 4.5 and loaded.iteration == 77

    def test_no_cavity_roundtrip(self, tmp_path):
        orbs = self._orbitals()
        path = tmp_path / "state.chk"
        save_checkpoint(path, Checkpoint(orbitals=orbs, cavity=None))
        assert load_checkpoint(path).cavity is None

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.chk"
        path.write_bytes(b"NOTACHKP" + b"\x00" * 64)
        with pytest.raises(UsageError):
            load_checkpoint(path)


class TestTimeSeries:
    def test_roundtrip(self, tmp_path):
        t = np.arange(50) * 0.1
        series = TimeSeries(columns={"t": t, "Dx": np.sin(t), "q": np.cos(t)},
                            meta={"dt": 0.1, "kick_strength": 1e-3,
                                  "method": "tensor-product"})
        path = tmp_path / "ts.tsv"
        series.write(path)
        back = TimeSeries.read(path)
        assert back.meta["dt"] == 0.1
        assert back.meta["method"] == "tensor-product"
        assert np.array_equal(back["Dx"], series["Dx"])

    def test_nonfinite_rejected(self):
        t = np.arange(5) * 0.1
        bad = np.array([0.0, 1.0, np.nan, 0.0, 1.0])
        with pytest.raises(UsageError):
            TimeSeries(columns={"t": t, "Dx": bad})

    def test_missing_time_column(self):
        with pytest.raises(UsageError):
            TimeSeries(columns={"Dx": np.zeros(3)})


CLI_CFG = """
[system]
dim = 1
points = 81
spacing = 0.4
occupations = 1.0
ions =
    1.0  0.0  1.0

[cavity]
omega = 0.08
lambda = 0.05
n_fock = 1

[scf]
max_iterations = 2000
tol_energy = 1e-9
tol_density = 1e-7

[prop]
dt = 0.05
n_steps = 600
kick_strength = 0.001

[spectra]
omega_min = 0.05
omega_max = 0.9
omega_step = 0.002

[output]
prefix = atom
"""


def run_cli(args, cwd):
    return subprocess.run([sys.executable, "-m", "cavitydft", *args],
                          capture_output=True, text=True, cwd=cwd)


@pytest.fixture(scope="class")
def cli_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli")
    (path / "run.cfg").write_text(CLI_CFG)
    return path


class TestCli:
    def test_propagate_without_checkpoint_fails(self, cli_dir):
        res = run_cli(["propagate", "--config", "run.cfg"], cli_dir)
        assert res.returncode != 0
        assert "ERROR" in res.stderr and "scf" in res.stderr

    def test_full_pipeline(self, cli_dir):
        res = run_cli(["scf", "--config", "run.cfg"], cli_dir)
        assert res.returncode == 0, res.stderr
        assert (cli_dir / "atom_scf.chk").exists()
        assert (cli_dir / "atom_scf_energy.tsv").exists()

        res = run_cli(["propagate", "--config", "run.cfg"], cli_dir)
        assert res.returncode == 0, res.stderr
        ts = cli_dir / "atom_timeseries.tsv"
        assert ts.exists()

        res = run_cli(["spectrum", "--config", "run.cfg"], cli_dir)
        assert res.returncode == 0, res.stderr
        assert (cli_dir / "atom_spectrum.tsv").exists()
        assert (cli_dir / "atom_spectrum_sector0.tsv").exists()

        res = run_cli(["validate", "--config", "run.cfg"], cli_dir)
        assert res.returncode == 0, res.stderr
        assert "checks passed" in res.stdout

        res = run_cli(["oracle", "--config", "run.cfg"], cli_dir)
        assert res.returncode == 0, res.stderr
        assert (cli_dir / "atom_golden.tsv").exists()

    def test_determinism_bit_identical_outputs(self, cli_dir, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            res = run_cli(["scf", "--config", "run.cfg", "--out", str(out)], cli_dir)
            assert res.returncode == 0, res.stderr
        chk1 = (out1 / "atom_scf.chk").read_bytes()
        chk2 = (out2 / "atom_scf.chk").read_bytes()
        assert chk1 == chk2
        assert ((out1 / "atom_scf_energy.tsv").read_text()
                == (out2 / "atom_scf_energy.tsv").read_text())

    def test_bad_config_exit_code(self, cli_dir):
        (cli_dir / "bad.cfg").write_text("[system]\ndim = 5\n")
        res = run_cli(["scf", "--config", "bad.cfg"], cli_dir)
        assert res.returncode == 2
        assert "ERROR ConfigurationError" in res.stderr


POLARITON_CFG = """
[system]
dim = 1
points = 55
spacing = 0.3
occupations = 1.0
hartree = no
xc = no
harmonic_omega = 0.5

[cavity]
omega = 0.5
lambda = 0.1
n_fock = 2

[scf]
max_iterations = 4000
tol_energy = 1e-12
tol_density = 1e-9

[prop]
dt = 0.05
n_steps = 16000
kick_strength = 0.001

[spectra]
omega_min = 0.3
omega_max = 0.7
omega_step = 0.0005

[output]
prefix = model
"""


class TestCliGoldenPipeline:
    """scf -> propagate -> spectrum reproduces the closed-form doublet."""

    def test_two_peak_polariton_table(self, tmp_path):
        from cavitydft import oracle
        from cavitydft.cavity import CavityMode

        (tmp_path / "model.cfg").write_text(POLARITON_CFG)
        for cmd in ("scf", "propagate", "spectrum"):
            res = run_cli([cmd, "--config", "model.cfg"], tmp_path)
            assert res.returncode == 0, res.stderr
        table = (tmp_path / "model_spectrum.tsv").read_text().splitlines()
        peak_lines = [ln for ln in table if ln.startswith("# peak")]
        assert len(peak_lines) == 2
        locations = sorted(float(ln.split("location=")[1].split()[0])
                           for ln in peak_lines)
        cav = CavityMode(omega=0.5, coupling=(0.1,), n_fock=2)
        wm, wp = oracle.normal_mode_frequencies(0.5, cav)
        resolution = 2 * np.pi / (16000 * 0.05)
        assert abs(locations[0] - wm) < resolution
        assert abs(locations[1] - wp) < resolution
        assert "Rabi splitting" in run_cli(
            ["spectrum", "--config", "model.cfg"], tmp_path).stdout

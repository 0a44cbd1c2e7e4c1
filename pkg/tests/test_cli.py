import csv
import re

import numpy as np
import pytest

from wavemode.cli import main
from wavemode.config import PIPELINES, SCHEMA, parse_config
from wavemode.errors import ConfigError
from wavemode.pekeris import WaveguideParams, solve_modes

BASE = """\
[waveguide]
n1 = 1.2
d = 1.0
m_over_pi = 4.3

[medium]
kernel = {kernel}
a = 2.0

[pipeline]
name = {name}

[montecarlo]
n_paths = 5000
batch_size = 2048
horizon_list = 0.5, 1.0

[continuum]
n_list = 8, 16
z_list = 0.1, 1

[regime]
tau_list = 1e-2, 1e-3
"""


def write(tmp_path, name="decay", kernel="gaussian_bump", extra="", fname="s.ini"):
    path = tmp_path / fname
    path.write_text(BASE.format(name=name, kernel=kernel) + extra)
    return path


def run(path, out, *flags):
    return main(["run", str(path), "--output-dir", str(out), *flags])


@pytest.mark.parametrize("name", PIPELINES)
def test_every_pipeline_runs(tmp_path, name):
    kernel = "cosine_band" if name in ("diffusion", "continuum-check") else "gaussian_bump"
    out = tmp_path / "out"
    assert run(write(tmp_path, name, kernel), out) == 0
    assert (out / "manifest.txt").exists()
    summary = (out / "summary.txt").read_text()
    assert summary.startswith(f"pipeline: {name}\n")
    assert list(out.glob("*.csv"))


def test_modes_csv(tmp_path):
    out = tmp_path / "out"
    assert run(write(tmp_path, "modes"), out) == 0
    rows = list(csv.reader((out / "modes.csv").open()))
    assert rows[0] == ["j", "sigma", "beta", "zeta", "A"]
    ms = solve_modes(WaveguideParams.from_mode_parameter(1.2, 1.0, 4.3))
    assert len(rows) - 1 == ms.N
    assert np.allclose([float(r[1]) for r in rows[1:]], ms.sigma, rtol=0, atol=0)


def test_decay_summary_bounds_line(tmp_path):
    out = tmp_path / "out"
    assert run(write(tmp_path, "decay"), out) == 0
    text = (out / "summary.txt").read_text()
    m = re.search(r"min Lambda <= Lambda_inf <= mean Lambda: (\S+) <= (\S+) <= (\S+)", text)
    lo, lam, hi = map(float, m.groups())
    assert lo <= lam <= hi
    slope = float(re.search(r"fitted_slope: (\S+)", text).group(1))
    assert slope == pytest.approx(-lam, rel=1e-2)


def test_montecarlo_byte_identical(tmp_path):
    path = write(tmp_path, "montecarlo")
    assert run(path, tmp_path / "a") == 0
    assert run(path, tmp_path / "b", "--threads", "3") == 0
    for name in ("montecarlo.csv", "occupation.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert run(path, tmp_path / "c", "--seed", "7") == 0
    assert (tmp_path / "a" / "montecarlo.csv").read_bytes() != (tmp_path / "c" / "montecarlo.csv").read_bytes()
    assert "seed = 7" in (tmp_path / "c" / "manifest.txt").read_text()


def test_manifest_lists_every_default(tmp_path):
    out = tmp_path / "out"
    assert run(write(tmp_path, "power"), out) == 0
    text = (out / "manifest.txt").read_text()
    for section, keys in SCHEMA.items():
        assert f"[{section}]" in text
        for key in keys:
            assert re.search(rf"^{key} = ", text.split(f"[{section}]")[1], re.M), (section, key)
    # Run-time defaults are recorded with their resolved value.
    z_max = re.search(r"\[power\]\nz_max = (\S+)", text).group(1)
    assert float(z_max) > 0


@pytest.mark.parametrize("extra, line, pattern", [
    ("[medium]\n", None, "Duplicate|already exists"),
    ("\n[decay]\nz_pionts = 4\n", "z_pionts", "unknown key 'z_pionts'"),
    ("\n[plotting]\ndpi = 300\n", "[plotting]", r"unknown section \[plotting\]"),
    ("\n[power]\nz_points = many\n", "z_points", "not a valid int"),
    ("\n[diffusion]\nbc = robin\n", "bc = robin", "unknown boundary condition"),
    ("\n[regime]\n", None, "Duplicate|already exists"),
])
def test_config_errors_exit_2(tmp_path, capsys, extra, line, pattern):
    path = write(tmp_path, extra=extra)
    if line is not None:
        line = next(i for i, t in enumerate(path.read_text().splitlines(), 1) if t.startswith(line))
    assert run(path, tmp_path / "out") == 2
    err = capsys.readouterr().err
    assert "config error" in err
    assert re.search(pattern, err), err
    if line is not None:
        assert f"line {line}:" in err


def test_bad_physical_values(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text(BASE.format(name="modes", kernel="constant").replace("n1 = 1.2", "n1 = 0.9"))
    assert main(["validate", str(path)]) == 2
    assert "line 2:" in capsys.readouterr().err
    path.write_text(BASE.format(name="modes", kernel="constant").replace("a = 2.0", "a = -1"))
    assert main(["validate", str(path)]) == 2


def test_numerical_failure_exit_3(tmp_path, capsys):
    path = tmp_path / "s.ini"
    path.write_text(BASE.format(name="modes", kernel="constant").replace("m_over_pi = 4.3", "k = 0.5"))
    assert main(["validate", str(path)]) == 0
    assert run(path, tmp_path / "out") == 3
    assert "NoPropagatingModes" in capsys.readouterr().err


def test_diffusion_degenerate_medium_exit_3(tmp_path, capsys):
    assert run(write(tmp_path, "diffusion", "constant"), tmp_path / "out") == 3
    assert "DomainError" in capsys.readouterr().err


def test_frequency_form_matches_k():
    text = BASE.format(name="modes", kernel="constant").replace("m_over_pi = 4.3", "omega = 30.0\nc = 1.5")
    cfg = parse_config(text)
    from wavemode.cli import build_waveguide

    assert build_waveguide(cfg).k == pytest.approx(20.0)
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config(text.replace("omega = 30.0", "k = 3\nomega = 30.0"))
    with pytest.raises(ConfigError, match="together"):
        parse_config(text.replace("c = 1.5\n", ""))


def test_tabulated_kernel_relative_path(tmp_path):
    g = np.linspace(0, 1, 6)
    rows = ["x,y,value"] + [f"{float(x)!r},{float(y)!r},1.0" for x in g for y in g]
    (tmp_path / "k.csv").write_text("\n".join(rows) + "\n")
    path = write(tmp_path, "coefficients", "tabulated", extra="")
    path.write_text(path.read_text().replace("a = 2.0", "a = 2.0\npath = k.csv"))
    out = tmp_path / "out"
    assert run(path, out) == 0
    bad = tmp_path / "bad.ini"
    bad.write_text(path.read_text().replace("k.csv", "missing.csv"))
    assert main(["validate", str(bad)]) == 2

import numpy as np
import pytest

import nvwire

SMALL = """
[wire]
segments = Fe 3 um
diameter = 188 nm
[scene]
fov_width = 6 um
fov_height = 2 um
"""


def read_ovf_values(text):
    # minimal reader written against the OVF 2.0 text layout, not the library
    header = {}
    rows = []
    in_data = False
    for line in text.splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if body.lower().startswith("begin: data"):
                in_data = True
            elif body.lower().startswith("end: data"):
                in_data = False
            elif ":" in body:
                k, v = body.split(":", 1)
                header[k.strip().lower()] = v.strip()
        elif in_data and line.strip():
            rows.append([float(x) for x in line.split()])
    return header, np.array(rows)


def test_version_and_default_config_round_trip():
    assert nvwire.__version__
    text = nvwire.default_config()
    assert nvwire.normalize_config(text) == text
    assert nvwire.normalize_config("") == text


def test_config_error_names_the_line():
    with pytest.raises(nvwire.ConfigError, match="line 2"):
        nvwire.normalize_config("[nv]\ncontrast = 150%\n")
    with pytest.raises(nvwire.Error):
        nvwire.normalize_config("[wire]\ndiameter = 188\n")


def test_resonances_expansion_tracks_exact():
    b = [0.002, -0.001, 0.003]
    # expansion labels branches by field sign, the eigen-solve sorts them
    approx = sorted(nvwire.resonances(b, 2))
    exact = nvwire.resonances(b, 2, exact=True)
    assert abs(approx[0] - exact[0]) < 1e5
    assert abs(approx[1] - exact[1]) < 1e5
    assert exact[0] < 2.87e9 < exact[1]


def test_ovf_round_trip_and_independent_reader():
    rng = np.random.default_rng(3)
    m = rng.uniform(-1.2e6, 1.2e6, size=(2, 3, 4, 3))
    text = nvwire.write_ovf(20e-9, [1e-7, -2e-7, 0.0], m)
    back = nvwire.parse_ovf(text)
    assert back["cell_size"] == 20e-9
    assert back["origin"] == [1e-7, -2e-7, 0.0]
    assert np.array_equal(back["m"], m)
    header, values = read_ovf_values(text)
    assert int(header["xnodes"]) == 4
    assert int(header["ynodes"]) == 3
    assert int(header["znodes"]) == 2
    assert values.shape == (24, 3)
    assert np.array_equal(values, m.reshape(-1, 3))
    with pytest.raises(nvwire.FormatError):
        nvwire.parse_ovf(text.replace("# Begin: Data Text", "# Begin: Data Binary 8"))


def test_simulate_small_wire():
    out = nvwire.simulate(SMALL)
    b = out["b_parallel"]
    ok = out["fit_ok"]
    assert b.shape == (out["lattice"]["ny"], out["lattice"]["nx"])
    # tips push some pixels out of the detection window
    assert 0.5 * ok.size < ok.sum() < ok.size
    assert np.all(np.isnan(b[ok == 0]))
    feats = out["features"]
    assert len(feats) == 2
    assert feats[0]["orientation"] == -feats[1]["orientation"]
    assert feats[0]["location"] < 0 < feats[1]["location"]


def test_cli_in_process(tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text(SMALL)
    code, out, err = nvwire.run_cli(["simulate", "-c", str(cfg), "-o", str(tmp_path), "--no-timestamp"])
    assert code == 0, err
    csv = (tmp_path / "nvwire_map.csv").read_text()
    m = nvwire.parse_map_csv(csv)
    direct = nvwire.simulate(SMALL)
    assert np.array_equal(m["fit_ok"], direct["fit_ok"])
    valid = direct["fit_ok"] == 1
    assert np.array_equal(m["b_parallel"][valid], direct["b_parallel"][valid])
    code, _, err = nvwire.run_cli(["simulate", "-c", str(tmp_path / "missing.cfg"), "-o", str(tmp_path)])
    assert code == 1
    assert err.startswith("error: stage=")

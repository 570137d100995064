import csv
import io
import json

import numpy as np
import pytest

from thermoscope import cli, operators as ops, serialization as ser
from thermoscope.errors import ValidationError
from thermoscope.simulate import preset_config, simulate_dataset


@pytest.fixture
def data_file(tmp_path):
    path = tmp_path / "data.json"
    assert cli.main(["simulate", "--preset", "worked-qubit", "--seed", "7", "--output", str(path)]) == 0
    return path


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_dataset_round_trip(tmp_path):
    ds = simulate_dataset(preset_config("isotropic", seed=3))
    path = tmp_path / "d.json"
    with open(path, "w") as fh:
        ser.dump_dataset(ds, fh)
    back = ser.load_dataset(path)
    assert np.array_equal(back.means, ds.means)
    assert np.array_equal(back.sizes, ds.sizes)
    assert all(np.array_equal(a, b) for a, b in zip(back.observables, ds.observables))
    assert ser.dataset_digest(back) == ser.dataset_digest(ds)
    ser.validate(json.loads(path.read_text()), "dataset")


def test_non_uniform_reference_round_trip():
    ref = ops.qubit_state([0.1, 0.2, -0.1])
    ds = simulate_dataset(preset_config("z-family", seed=1))
    from thermoscope import Dataset

    ds = Dataset(ds.observables, ds.sizes, ds.means, ref, ds.names)
    back = ser.dataset_from_dict(json.loads(json.dumps(ser.dataset_to_dict(ds))))
    assert np.allclose(back.reference.matrix, ref.matrix, atol=1e-15)


@pytest.mark.parametrize(
    "mutate, path",
    [
        (lambda d: d.pop("samples"), "samples"),
        (lambda d: d["samples"][1].update(size=0), "samples/1/size"),
        (lambda d: d["samples"][0]["means"].pop(), "samples/0/means"),
        (lambda d: d["observables"][0].update(matrix=[[[1, 0], [1, 0]], [[0, 0], [0, 0]]]), "observables/0/matrix"),
        (lambda d: d.update(dimension=3), "observables/0/matrix"),
        (lambda d: d.update(reference_state="flat"), "reference_state"),
    ],
)
def test_invalid_dataset_paths(data_file, mutate, path):
    doc = json.loads(data_file.read_text())
    mutate(doc)
    with pytest.raises(ValidationError) as info:
        ser.dataset_from_dict(doc)
    assert info.value.path == path


def test_assess_cli(data_file, tmp_path, capsys):
    plot = tmp_path / "plot.csv"
    code, out, err = run(["assess", "--input", data_file, "--candidates", "auto", "--plot-data", plot], capsys)
    assert code == 0
    report = json.loads(out)
    ser.validate(report, "report")
    assert report["verdict"] == "thermalized"
    assert report["winner"].endswith("-1")
    for key in ("dataset_digest", "gaussian_regime", "scores", "winner", "comparisons", "hamiltonian",
                "verdict", "margins", "warnings"):
        assert key in report
    rows = list(csv.DictReader(plot.open()))
    assert len(rows) == 10 and "resid_Z" in rows[0]


def test_assess_level_file_and_margin(data_file, tmp_path, capsys):
    levels = tmp_path / "levels.json"
    levels.write_text(json.dumps({"levels": [
        {"label": "empty", "coefficients": []},
        {"label": "Z", "coefficients": [[0, 0, 1]]},
        {"label": "XZ", "coefficients": [[1, 0, 0], [0, 0, 1]]},
    ]}))
    code, out, _ = run(["assess", "--input", data_file, "--level-file", levels, "--margin-factor", "3"], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["winner"] == "Z"
    assert {(c["coarse"], c["fine"]) for c in report["comparisons"]} >= {("empty", "Z"), ("Z", "XZ")}
    # the simulated margins (about 5.2 and 5.9) still clear a factor of 5
    tighter = json.loads(run(["assess", "--input", data_file, "--level-file", levels,
                              "--margin-factor", "5"], capsys)[1])
    assert tighter["verdict"] == "thermalized"
    assert min(tighter["margins"]["spread"], tighter["margins"]["tilt"]) >= 5
    strict = json.loads(run(["assess", "--input", data_file, "--level-file", levels,
                             "--margin-factor", "50"], capsys)[1])
    assert strict["verdict"] == "inconclusive"
    assert strict["margin_factor"] == 50


def test_estimate_cli(data_file, capsys):
    code, out, _ = run(["estimate", "--input", data_file, "--method", "exact"], capsys)
    assert code == 0
    exact = json.loads(out)["hamiltonian"]
    pert = json.loads(run(["estimate", "--input", data_file, "--method", "perturbative"], capsys)[1])["hamiltonian"]
    a, b = np.array(exact["xi"]), np.array(pert["xi"])
    cosang = a @ b / np.linalg.norm(a) / np.linalg.norm(b)
    assert np.degrees(np.arccos(min(cosang, 1))) < 0.7


def test_exit_codes(tmp_path, data_file, capsys):
    doc = json.loads(data_file.read_text())
    del doc["samples"]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code, _, err = run(["assess", "--input", bad], capsys)
    assert code == 2 and "samples" in err
    code, _, err = run(["assess", "--input", tmp_path / "missing.json"], capsys)
    assert code == 2
    (tmp_path / "garbage.json").write_text("{not json")
    assert run(["estimate", "--input", tmp_path / "garbage.json"], capsys)[0] == 2
    single = json.loads(data_file.read_text())
    single["samples"] = single["samples"][:1]
    one = tmp_path / "one.json"
    one.write_text(json.dumps(single))
    assert run(["estimate", "--input", one], capsys)[0] == 2
    assert run(["assess", "--input", one], capsys)[0] == 2
    # infeasible means reach the solver and fail there
    far = json.loads(data_file.read_text())
    far["samples"][0]["means"] = [0.99999, 0.99999, 0.99999]
    inf = tmp_path / "inf.json"
    inf.write_text(json.dumps(far))
    code, _, err = run(["assess", "--input", inf], capsys)
    assert code == 3 and "InfeasibleMoments" in err


def test_solver_failure_exit_code(data_file, monkeypatch, capsys):
    from thermoscope import hamiltonian
    from thermoscope.errors import NonConvergence

    def fail(*a, **k):
        raise NonConvergence("injected", best=None, residual=1.0)

    monkeypatch.setattr(hamiltonian, "estimate_hamiltonian", fail)
    assert run(["estimate", "--input", data_file], capsys)[0] == 3


@pytest.mark.slow
def test_simulate_determinism_and_study(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert cli.main(["simulate", "--preset", "worked-qubit", "--seed", "7", "--output", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()
    code, out, _ = run(["simulate", "--preset", "z-family", "--study", "trials=4"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 5 and rows[-1]["trial"] == "summary"
    with pytest.raises(SystemExit):
        cli.main(["simulate", "--study", "trials=zero"])


@pytest.mark.slow
def test_round_trip_digest_deterministic(tmp_path, capsys):
    digests = []
    for k in range(2):
        path = tmp_path / f"d{k}.json"
        cli.main(["simulate", "--preset", "z-family", "--seed", "11", "--output", str(path)])
        digests.append(json.loads(run(["assess", "--input", path], capsys)[1])["dataset_digest"])
    assert digests[0] == digests[1]


def test_module_entry_point(data_file):
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "thermoscope", "estimate", "--input", str(data_file)],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["informationally_complete"] is True


def _pauli_entries():
    return [{"name": n, "matrix": ser._matrix_to_json(p)} for n, p in zip("XYZ", ops.pauli_matrices())]


def test_simulate_from_config_file(tmp_path, capsys):
    family = {"dimension": 2, "observables": _pauli_entries(), "sizes": [5000] * 4,
              "xi": [0.0, 0.0, 1.0], "betas": [0.1, 0.2, 0.3, 0.4], "seed": 5}
    path = tmp_path / "family.json"
    path.write_text(json.dumps(family))
    code, out, _ = run(["simulate", "--config", path], capsys)
    assert code == 0
    ds = ser.dataset_from_dict(json.loads(out))
    assert ds.R == 4 and np.all(ds.sizes == 5000)
    # <Z> of exp(beta Z)/tr is tanh(beta)
    assert np.allclose(ds.means[:, 2], np.tanh([0.1, 0.2, 0.3, 0.4]), atol=5 / np.sqrt(5000))
    assert run(["simulate", "--config", path], capsys)[1] == out

    explicit = {"dimension": 2, "observables": _pauli_entries(), "sizes": [100, 100],
                "states": [ser._matrix_to_json(ops.qubit_state([0, 0, 0.5]).matrix)] * 2,
                "noise_model": "multinomial"}
    path.write_text(json.dumps(explicit))
    assert run(["simulate", "--config", path], capsys)[0] == 0

    bad = dict(family, states=explicit["states"])  # both kinds of truth
    path.write_text(json.dumps(bad))
    assert run(["simulate", "--config", path], capsys)[0] == 2
    bad = dict(family, xi=[1.0])
    path.write_text(json.dumps(bad))
    code, _, err = run(["simulate", "--config", path], capsys)
    assert code == 2 and "xi" in err
    assert run(["simulate", "--config", tmp_path / "missing.json"], capsys)[0] == 2

import json

import numpy as np
import pytest

from gnnbeam import GnnSolution, SchemaError, read_csi, write_solutions


def complex_obj(rng, *shape):
    return {"re": rng.normal(size=shape).tolist(),
            "im": rng.normal(size=shape).tolist()}


def record_obj(rng, sid="s0", M=2, Nx=2, Nz=2, K=2, L=1, noisy=False, tau=None):
    N = Nx * Nz
    links = lambda: {
        "G": complex_obj(rng, N, M),
        "h_ris_cu": complex_obj(rng, K, N),
        "h_bs_cu": complex_obj(rng, K, M),
        "h_ris_tgt": complex_obj(rng, L, N),
    }
    channels = links()
    channels["noise_var"] = [1e-3] * K
    return {
        "scenario_id": sid,
        "config": {
            "system": {"M": M, "Nx": Nx, "Nz": Nz},
            "K": K, "L": L, "P0": 1.0, "rho_th": 0.5, "tau": tau,
        },
        "channels": channels,
        "perturbed": links() if noisy else None,
        "sigma_e2": 0.01 if noisy else None,
    }


def write_lines(path, objs):
    path.write_text("".join(json.dumps(o) + "\n" for o in objs))


def test_reads_shapes_and_defaults(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "d.jsonl"
    write_lines(path, [record_obj(rng), record_obj(rng, sid="s1", noisy=True)])
    a, b = read_csi(path)
    assert (a.M, a.N, a.K, a.L) == (2, 4, 2, 1)
    assert a.channels["G"].shape == (4, 2)
    assert a.channels["G"].dtype == complex
    np.testing.assert_array_equal(a.tau, np.ones(2))
    assert a.noisy is None and a.sigma_e2 is None
    assert b.noisy is not None and b.sigma_e2 == 0.01
    assert b.view() is b.noisy
    assert b.view(perfect=True) is b.channels
    assert a.view() is a.channels


def test_explicit_tau_roundtrips(tmp_path):
    rng = np.random.default_rng(1)
    path = tmp_path / "d.jsonl"
    write_lines(path, [record_obj(rng, tau=[2.0, 0.5])])
    (s,) = read_csi(path)
    np.testing.assert_array_equal(s.tau, [2.0, 0.5])


@pytest.mark.parametrize("mangle,needle", [
    (lambda o: o.pop("scenario_id"), "scenario_id"),
    (lambda o: o["channels"].pop("G"), "G"),
    (lambda o: o["channels"]["h_bs_cu"]["re"].pop(), "h_bs_cu"),
    (lambda o: o["channels"].update(noise_var=[0.0, 0.0]), "noise_var"),
    (lambda o: o["config"].pop("P0"), "config"),
    (lambda o: o.update(sigma_e2=0.01), "pair"),
    (lambda o: o["config"].update(tau=[1.0]), "tau"),
])
def test_rejects_malformed_records(tmp_path, mangle, needle):
    rng = np.random.default_rng(2)
    obj = record_obj(rng)
    mangle(obj)
    path = tmp_path / "d.jsonl"
    write_lines(path, [obj])
    with pytest.raises(SchemaError, match=needle):
        read_csi(path)


def test_error_carries_line_number(tmp_path):
    rng = np.random.default_rng(3)
    path = tmp_path / "d.jsonl"
    good = json.dumps(record_obj(rng))
    path.write_text(good + "\n{broken\n")
    with pytest.raises(SchemaError, match="line 2"):
        read_csi(path)


def test_duplicate_ids_rejected(tmp_path):
    rng = np.random.default_rng(4)
    path = tmp_path / "d.jsonl"
    write_lines(path, [record_obj(rng), record_obj(rng)])
    with pytest.raises(SchemaError, match="duplicate"):
        read_csi(path)


def test_solution_shape_validation():
    with pytest.raises(SchemaError, match="W must be"):
        GnnSolution("x", W=np.zeros((2, 1)), R0=np.zeros((3, 3)),
                    theta=np.ones(4))


def test_written_solutions_layout(tmp_path):
    rng = np.random.default_rng(5)
    W = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    sol = GnnSolution("abc", W=W, R0=np.eye(2), theta=np.ones(4) * 1j,
                      runtime_ms=3.5)
    path = tmp_path / "s.jsonl"
    assert write_solutions(path, [sol, sol]) == 2
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    obj = json.loads(lines[0])
    assert set(obj) == {"scenario_id", "W", "R0", "theta", "meta"}
    assert obj["meta"] == {"method": "gnn", "runtime_ms": 3.5, "iterations": 1}
    np.testing.assert_array_equal(np.asarray(obj["W"]["re"]), W.real)
    np.testing.assert_array_equal(np.asarray(obj["theta"]["im"]), np.ones(4))
    assert ", " not in lines[0]  # compact separators

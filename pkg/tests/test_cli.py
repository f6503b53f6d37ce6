import csv
import json

import numpy as np
import pytest

from quant_lab.bounds.constants import compute_C2, failure_probability
from quant_lab.cli.main import EXIT_NUMERICAL, EXIT_PASS, EXIT_USAGE, main
from quant_lab.cli.matrix_io import HEADER, MAGIC, file_digest, load_matrix, save_matrix
from quant_lab.quantizers.quantizer import reorder_descending
from quant_lab.utils.errors import DimensionHeaderMismatch, NonFiniteEntry, ParseError


@pytest.fixture
def layer_files(tmp_path, make_instance):
    X, W = make_instance(21, 12, 6, n_prime=2)
    x_path, w_path = tmp_path / "x.csv", tmp_path / "w.csv"
    save_matrix(x_path, X)
    save_matrix(w_path, 3 * W)
    return X, 3 * W, str(x_path), str(w_path)


def run_json(argv, capsys):
    code = main(argv)
    return code, json.loads(capsys.readouterr().out)


def test_csv_load(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("2,3\n1,2,3\n4.5,-1e-3,0\n")
    X = load_matrix(path)
    assert X.shape == (2, 3)
    assert X.data[1].tolist() == [4.5, -1e-3, 0.0]


def test_csv_round_trip_keeps_every_bit(tmp_path):
    data = np.random.default_rng(0).standard_normal((4, 5))
    save_matrix(tmp_path / "m.csv", data)
    assert np.array_equal(load_matrix(tmp_path / "m.csv").data, data)


def test_raw_round_trip_is_bit_exact(tmp_path):
    data = np.random.default_rng(1).standard_normal((3, 7))
    path = tmp_path / "m.bin"
    save_matrix(path, data)
    assert path.stat().st_size == HEADER.size + data.size * 8
    assert path.read_bytes()[:4] == MAGIC
    assert load_matrix(path).data.tobytes() == data.tobytes()


@pytest.mark.parametrize(
    "text, error",
    [
        ("", ParseError),
        ("2\n1,2\n", ParseError),
        ("2,2\n1,2\n", DimensionHeaderMismatch),
        ("1,2\n1,abc\n", ParseError),
        ("1,2\n1\n", ParseError),
        ("1,2\n1,nan\n", NonFiniteEntry),
        ("1,2\n1,inf\n", NonFiniteEntry),
    ],
)
def test_csv_errors(tmp_path, text, error):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(error):
        load_matrix(path)


def test_raw_errors(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOPE" + bytes(12))
    with pytest.raises(ParseError):
        load_matrix(path)
    path.write_bytes(HEADER.pack(MAGIC, 2, 2, 0) + bytes(8 * 3))
    with pytest.raises(DimensionHeaderMismatch):
        load_matrix(path)
    path.write_bytes(b"QL")
    with pytest.raises(ParseError):
        load_matrix(path)


def test_quantize_on_identity_rounds(tmp_path, capsys):
    w = np.array([[0.2], [-1.7], [2.4], [0.9]])
    save_matrix(tmp_path / "x.csv", np.eye(4))
    save_matrix(tmp_path / "w.csv", w)
    q_path = tmp_path / "q.csv"
    argv = ["quantize", "--x", str(tmp_path / "x.csv"), "--w", str(tmp_path / "w.csv")]
    code, report = run_json(argv + ["--q-out", str(q_path)], capsys)
    assert code == EXIT_PASS
    assert report["q"] == [0.0, -2.0, 2.0, 1.0]
    assert load_matrix(q_path).data[:, 0].tolist() == [0.0, -2.0, 2.0, 1.0]


def test_quantize_reports_generalization(layer_files, tmp_path, capsys):
    X, _, x_path, w_path = layer_files
    argv = ["quantize", "--x", x_path, "--w", w_path, "--unseen", x_path, "--order", "desc"]
    code, report = run_json(argv, capsys)
    assert code == EXIT_PASS
    assert len(report["generalization"]) == 2
    assert report["generalization"][0]["mismatch"] == pytest.approx(0.0, abs=1e-9)
    assert sorted(report["permutation"]) == list(range(6))


def test_verify_writes_report(layer_files, tmp_path):
    _, _, x_path, w_path = layer_files
    out = tmp_path / "report.json"
    assert main(["verify", "--x", x_path, "--w", w_path, "--out", str(out)]) == EXIT_PASS
    report = json.loads(out.read_text())
    assert report["schema_version"] == 1
    assert report["passed"] is True
    assert report["min_slack"] >= 0
    assert report["inputs"]["x"]["sha256"] == file_digest(x_path)
    assert report["spec"]["command"] == "verify"
    names = {check["name"] for check in report["checks"]}
    assert {"l2_combined[0]", "norm_identity[1]"} <= names


def test_verify_without_dampening(layer_files, capsys):
    _, _, x_path, w_path = layer_files
    code, report = run_json(["verify", "--x", x_path, "--w", w_path, "--lambda", "0"], capsys)
    assert code == EXIT_PASS
    assert any(c["name"] == "l2_output_undampened[0]" for c in report["checks"])


def test_verify_qronos(layer_files, tmp_path, capsys):
    X, _, x_path, w_path = layer_files
    x_tilde = tmp_path / "xt.csv"
    save_matrix(x_tilde, X + 0.01 * np.random.default_rng(3).standard_normal(X.shape))
    argv = ["verify", "--method", "qronos", "--x", x_path, "--w", w_path, "--x-tilde", str(x_tilde)]
    code, report = run_json(argv, capsys)
    assert code == EXIT_PASS
    assert any(c["name"] == "qronos_l2[1]" for c in report["checks"])


def test_adversarial_csv(tmp_path):
    out = tmp_path / "table.csv"
    assert main(["adversarial", "--sizes", "4,16", "--out", str(out)]) == EXIT_PASS
    with open(out, newline="") as f:
        rows = list(csv.DictReader(f))
    assert [int(row["N"]) for row in rows] == [4, 16]
    assert float(rows[1]["weight_drift"]) == pytest.approx(16 / 3)


def test_usage_errors(layer_files, capsys):
    _, _, x_path, w_path = layer_files
    assert main(["quantize", "--x", x_path]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["quantize", "--x", x_path, "--w", x_path]) == EXIT_USAGE
    assert main(["quantize", "--x", x_path, "--w", "missing.csv"]) == EXIT_USAGE
    assert main(["oracle-compare", "--x", x_path, "--w", w_path]) == EXIT_USAGE
    assert main(["adversarial", "--sizes", "12"]) == EXIT_USAGE


def test_singular_hessian_is_numerical(tmp_path):
    save_matrix(tmp_path / "x.csv", np.array([[1.0, 1.0], [2.0, 2.0], [0.5, 0.5]]))
    save_matrix(tmp_path / "w.csv", np.array([[0.3], [0.6]]))
    argv = ["quantize", "--x", str(tmp_path / "x.csv"), "--w", str(tmp_path / "w.csv")]
    assert main(argv + ["--lambda", "0"]) == EXIT_NUMERICAL


def test_bounds_command(layer_files, capsys):
    _, _, x_path, w_path = layer_files
    code, report = run_json(["bounds", "--x", x_path, "--w", w_path, "--delta", "0.5"], capsys)
    assert code == EXIT_PASS
    assert report["bounds"]["n_prime"] == 2
    assert report["bounds"]["C2"] <= report["bounds"]["Cinf"]


@pytest.fixture
def spread_files(tmp_path, make_instance):
    """Columns of growing scale, so descending order reverses them."""
    X, w = make_instance(23, 12, 6)
    X = X * np.arange(1.0, 7.0)
    save_matrix(tmp_path / "xs.csv", X)
    save_matrix(tmp_path / "ws.csv", 3 * w)
    return X, str(tmp_path / "xs.csv"), str(tmp_path / "ws.csv")


def test_bounds_use_descending_order(spread_files, capsys):
    X, x_path, w_path = spread_files
    Xp, permutation = reorder_descending(X)
    code, report = run_json(["bounds", "--x", x_path, "--w", w_path, "--order", "desc"], capsys)
    assert code == EXIT_PASS
    assert report["permutation"] == permutation.tolist()
    lam = report["bounds"]["lam"]
    assert report["bounds"]["C2"] == pytest.approx(compute_C2(Xp, lam))


def test_verify_uses_descending_order(spread_files, capsys):
    X, x_path, w_path = spread_files
    Xp, permutation = reorder_descending(X)
    argv = ["verify", "--x", x_path, "--w", w_path, "--order", "desc", "--delta", "0.5"]
    code, report = run_json(argv, capsys)
    assert code == EXIT_PASS
    assert report["permutation"] == permutation.tolist()
    combined = next(c for c in report["checks"] if c["name"] == "l2_combined[0]")
    C2 = compute_C2(Xp, report["lambda"])
    assert combined["bound"] == pytest.approx(0.25 / 4 * 6 * C2**2)


def test_verify_saturated_grid_passes(tmp_path, make_instance, capsys):
    X, w = make_instance(24, 32, 16)
    save_matrix(tmp_path / "x.csv", X)
    save_matrix(tmp_path / "w.csv", 10 * w)
    argv = ["verify", "--x", str(tmp_path / "x.csv"), "--w", str(tmp_path / "w.csv")]
    code, report = run_json(argv + ["--bits", "1"], capsys)
    assert code == EXIT_PASS
    assert report["saturated_steps"][0] > 0
    checks = {c["name"]: c for c in report["checks"]}
    assert checks["l2_combined[0]"]["applicable"] is False
    assert checks["norm_identity[0]"]["applicable"] is True
    assert checks["norm_identity[0]"]["holds"] is True


def test_bounds_target_probability(layer_files, capsys):
    _, W, x_path, w_path = layer_files
    argv = ["bounds", "--x", x_path, "--w", w_path, "--eps", "0.05"]
    code, report = run_json(argv, capsys)
    assert code == EXIT_PASS
    bounds = report["bounds"]
    assert bounds["failure_prob"] == pytest.approx(0.05)
    assert failure_probability(18, 6, 2, bounds["p"], bounds["p_prime"]) == pytest.approx(0.05)
    assert bounds["required_bits"] >= 1
    assert bounds["finite_linf_bound_Xwq"] >= bounds["linf_bound_Xwq"] - 1e-12
    assert main(argv[:-1] + ["1.5"]) == EXIT_USAGE


def test_montecarlo_command(layer_files, capsys):
    _, _, x_path, w_path = layer_files
    argv = ["montecarlo", "--x", x_path, "--w", w_path, "--trials", "50", "--p", "0.1"]
    code, report = run_json(argv, capsys)
    assert code == EXIT_PASS
    assert report["verdict"]["vacuous"] is True
    assert report["verdict"]["trials"] == 50


def test_oracle_compare_command(tmp_path, capsys, make_instance):
    X, w = make_instance(22, 6, 4)
    save_matrix(tmp_path / "x.csv", X)
    save_matrix(tmp_path / "w.csv", w)
    argv = ["oracle-compare", "--x", str(tmp_path / "x.csv"), "--w", str(tmp_path / "w.csv")]
    code, report = run_json(argv + ["--bits", "1"], capsys)
    assert code == EXIT_PASS
    column = report["columns"][0]
    assert column["oracle"] <= min(column["optq"], column["msq"]) + 1e-12


def test_stochastic_runs_are_reproducible(layer_files, capsys):
    _, _, x_path, w_path = layer_files
    argv = ["quantize", "--x", x_path, "--w", w_path, "--round", "stoc", "--seed", "17"]
    first = run_json(argv, capsys)[1]["q"]
    second = run_json(argv + ["--threads", "4"], capsys)[1]["q"]
    assert first == second

import numpy as np
import pytest

from conflink import bounds, conformal, graph, io
from conflink.errors import FormatError


def test_graph_round_trip_with_truth(tmp_path, small_sbm):
    g, obs = small_sbm
    path = io.write_graph(tmp_path / "g.txt", g.a_star, obs.omega, g.x, header=["# hi"])
    obs2, truth = io.read_graph(path)
    assert np.array_equal(obs2.a, obs.a) and np.array_equal(obs2.omega, obs.omega)
    assert np.array_equal(obs2.x, obs.x)
    assert np.array_equal(truth.a_star, g.a_star)
    first = path.read_text().splitlines()
    assert first[0] == "# hi" and first[1] == f"{g.n} 2 0"
    assert first[2] == f"1 2 {g.a_star[0, 1]} {obs.omega[0, 1]}"


def test_observation_round_trip_without_truth(tmp_path, small_sbm):
    _, obs = small_sbm
    path = io.write_observation(tmp_path / "o.txt", obs)
    obs2, truth = io.read_graph(path)
    assert truth is None
    assert np.array_equal(obs2.a, obs.a) and np.array_equal(obs2.omega, obs.omega)
    assert "NA" in path.read_text()


def test_directed_round_trip(tmp_path):
    a = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]])
    om = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    path = io.write_graph(tmp_path / "d.txt", a, om, np.zeros((3, 0)), directed=True)
    obs, truth = io.read_graph(path)
    assert obs.directed and np.array_equal(truth.a_star, a)
    assert len(path.read_text().splitlines()) == 1 + 6


@pytest.mark.parametrize("body,row", [
    ("3 0 0\n1 2 0 1\n1 3 0\n2 3 0 1\n", 3),
    ("3 0 0\n1 2 0 1\n1 3 0 1\n3 2 0 1\n", 4),
    ("3 0 0\n1 2 0 1\n1 3 2 1\n2 3 0 1\n", 3),
    ("3 0 0\n1 2 NA 1\n1 3 0 1\n2 3 0 1\n", 2),
    ("3 0 0\n1 2 0 1\n1 2 0 1\n2 3 0 1\n", 3),
    ("3 0 0\n1 2 0 x\n", 2),
    ("3 0\n", 1),
])
def test_malformed_rows(tmp_path, body, row):
    path = tmp_path / "bad.txt"
    path.write_text(body)
    with pytest.raises(FormatError) as info:
        io.read_graph(path)
    assert info.value.row == row
    assert f"row {row}" in str(info.value)


def test_missing_pair(tmp_path):
    path = tmp_path / "short.txt"
    path.write_text("3 0 0\n1 2 0 1\n2 3 0 0\n")
    with pytest.raises(FormatError, match=r"\(1, 3\) is missing"):
        io.read_graph(path)


def test_missing_covariates(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("2 1 0\n1 2 0 0\n")
    with pytest.raises(FormatError, match="covariate"):
        io.read_graph(path)


def test_pvalue_file_round_trip(tmp_path):
    p = conformal.PValueFamily(pairs=np.array([[0, 3], [1, 2]]), numerators=np.array([2, 5]),
                               ell=6)
    path = io.write_pvalues(tmp_path / "p.txt", p, io.header_lines("pvalues", {"a": 1}, 7))
    text = path.read_text().splitlines()
    assert text[:3] == ["# conflink pvalues", "# seed: 7", '# config: {"a": 1}']
    assert "1 4 2 6" in text
    q = io.read_pvalues(path)
    assert np.array_equal(q.numerators, p.numerators) and q.ell == 6
    assert np.array_equal(q.pairs, p.pairs)


def test_bound_csv(tmp_path):
    p = conformal.PValueFamily(pairs=np.array([[0, 1], [0, 2]]), numerators=np.array([1, 3]),
                               ell=3)
    curve = bounds.bound_curve(p, bounds.lambda_closed_form(2, 3, 0.1), "paper")
    path = io.write_bound_curve(tmp_path / "b.csv", curve, ["# header"])
    rows = io.read_csv_rows(path)
    assert list(rows[0]) == io.BOUND_COLUMNS
    assert [int(r["num_rejections"]) for r in rows] == [1, 1, 2, 2]
    assert float(rows[0]["fdp_bound_raw"]) == curve.raw[0]
    assert rows[0]["form"] == "paper" and rows[0]["method"] == "closed_form"


def test_rejection_and_score_files(tmp_path):
    r = conformal.RejectionSet(pairs=np.array([[0, 4]]), threshold=conformal.as_fraction(0.25))
    path = io.write_rejections(tmp_path / "r.txt", r)
    text = path.read_text()
    assert "# threshold: 1/4" in text and "# rejection rule: p <= t" in text
    assert io.read_rejections(path) == {(0, 4)}

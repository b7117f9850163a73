import json

import numpy as np
import pytest

from mallows_binomial import Parameters, order_of, sample
from mallows_binomial.cli import (
    EXIT_BUDGET,
    EXIT_INPUT,
    EXIT_OK,
    IngestError,
    ScoreScale,
    ingest,
    main,
)
from mallows_binomial.kendall import distance


def write(path, text):
    path.write_text(text)
    return str(path)


# ---------------------------------------------------------------------------
# score scale + ingest
# ---------------------------------------------------------------------------

def test_scale_aibs_shape():
    scale = ScoreScale(min=1.0, max=5.0, step=0.1)
    assert scale.M == 40
    assert scale.to_integer(1.0) == 0
    assert scale.to_integer(5.0) == 40
    assert scale.to_integer(2.3) == 13


def test_scale_higher_is_better_reverses():
    scale = ScoreScale(min=0.0, max=10.0, step=1.0, higher_is_better=True)
    assert scale.to_integer(10.0) == 0
    assert scale.to_integer(0.0) == 10
    assert scale.to_raw(0) == 10.0
    assert scale.expected_raw(0.2) == pytest.approx(8.0)


def test_scale_rejects_bad_lattice():
    with pytest.raises(IngestError):
        ScoreScale(min=0.0, max=1.0, step=0.3)


def test_ingest_basic(tmp_path):
    scores = write(tmp_path / "s.csv", "judge,a,b,c\nj1,1.0,2.0,\nj2,1.5,2.5,3.0\n")
    rankings = write(tmp_path / "r.csv", "judge,rank1,rank2\nj1,b,a\nj2,,\n")
    scale = ScoreScale(min=1.0, max=3.0, step=0.5)
    ds, labels, judges = ingest(scores, rankings, scale)
    assert labels == ["a", "b", "c"] and judges == ["j1", "j2"]
    assert ds.M == 4
    assert ds.scores[0].tolist()[:2] == [0.0, 2.0]
    assert np.isnan(ds.scores[0][2])
    assert ds.rankings == ((1, 0), None)


def test_ingest_ranking_only_judge(tmp_path):
    scores = write(tmp_path / "s.csv", "judge,a,b\nj1,0,1\n")
    rankings = write(tmp_path / "r.csv", "judge,rank1\nj2,b\n")
    ds, _, judges = ingest(scores, rankings, ScoreScale(min=0, max=2, step=1))
    assert judges == ["j1", "j2"]
    assert np.isnan(ds.scores[1]).all()
    assert ds.rankings == (None, (1,))


def test_ingest_rejects_off_lattice(tmp_path):
    scores = write(tmp_path / "s.csv", "judge,a,b\nj1,1.0,2.25\n")
    with pytest.raises(IngestError, match="row 2 column 3"):
        ingest(scores, None, ScoreScale(min=1.0, max=3.0, step=0.5))


def test_ingest_rejects_duplicate_in_ranking(tmp_path):
    scores = write(tmp_path / "s.csv", "judge,a,b\nj1,1,2\n")
    rankings = write(tmp_path / "r.csv", "judge,rank1,rank2\nj1,a,a\n")
    with pytest.raises(IngestError, match="duplicate object"):
        ingest(scores, rankings, ScoreScale(min=0, max=3, step=1))


def test_ingest_rejects_unknown_label(tmp_path):
    scores = write(tmp_path / "s.csv", "judge,a,b\nj1,1,2\n")
    rankings = write(tmp_path / "r.csv", "judge,rank1\nj1,zzz\n")
    with pytest.raises(IngestError, match="unknown object label"):
        ingest(scores, rankings, ScoreScale(min=0, max=3, step=1))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def simulate_files(tmp_path, seed=5, I=6, J=4, R=3, M=8, theta=3.0):
    out = tmp_path / "sim"
    code = main(["simulate", "--I", str(I), "--J", str(J), "--R", str(R), "--M", str(M),
                 "--theta", str(theta), "--seed", str(seed), "--out-dir", str(out)])
    assert code == EXIT_OK
    return out


def data_flags(out, M):
    return ["--scores", str(out / "scores.csv"), "--rankings", str(out / "rankings.csv"),
            "--scale-min", "0", "--scale-max", str(M), "--scale-step", "1"]


def test_simulate_round_trips_through_ingest(tmp_path):
    out = simulate_files(tmp_path, seed=5, I=6, J=4, R=3, M=8, theta=3.0)
    scale = ScoreScale(min=0, max=8, step=1)
    ds, labels, judges = ingest(str(out / "scores.csv"), str(out / "rankings.csv"), scale)
    rng = np.random.default_rng(5)
    p = rng.uniform(size=4)
    truth = Parameters(p=p, theta=3.0, consensus_order=order_of(p))
    expected = sample(truth, 6, 8, 3, rng)
    assert np.array_equal(ds.scores, expected.scores)
    assert ds.rankings == expected.rankings
    truth_doc = json.loads((out / "truth.json").read_text())
    assert truth_doc["consensus_order"] == [labels[j] for j in truth.consensus_order]


def test_simulate_strong_consensus(tmp_path):
    out = simulate_files(tmp_path, seed=2, I=10, J=4, R=4, M=5, theta=50.0)
    scale = ScoreScale(min=0, max=5, step=1)
    ds, _, _ = ingest(str(out / "scores.csv"), str(out / "rankings.csv"), scale)
    truth = json.loads((out / "truth.json").read_text())
    labels = [f"o{j+1}" for j in range(4)]
    consensus = tuple(labels.index(v) for v in truth["consensus_order"])
    matches = sum(r == consensus for r in ds.rankings)
    assert matches >= 9


def test_fit_json_and_heuristic_equivalence(tmp_path, capsys):
    out = simulate_files(tmp_path, seed=7, I=8, J=4, R=3, M=8, theta=2.0)
    docs = {}
    for method in ("exact-crude", "exact-lp"):
        path = tmp_path / f"{method}.json"
        code = main(["fit", *data_flags(out, 8), "--method", method, "--out", str(path)])
        assert code == EXIT_OK
        docs[method] = json.loads(path.read_text())
    a, b = docs["exact-crude"], docs["exact-lp"]
    for key in ("p", "theta", "consensus_order", "expected_score", "f_value"):
        assert json.dumps(a[key]) == json.dumps(b[key])
    assert a["nodes_expanded"] >= 1
    assert set(a) >= {"labels", "method", "theta_flag", "non_identified", "optimal",
                      "budget_exhausted", "candidate_evaluations", "elapsed_seconds"}


def test_fit_brute_cap_exit_code(tmp_path):
    out = simulate_files(tmp_path, seed=9, I=4, J=8, R=3, M=5, theta=2.0)
    code = main(["fit", *data_flags(out, 5), "--method", "brute"])
    assert code == EXIT_BUDGET


def test_fit_missing_file_is_input_error(tmp_path):
    code = main(["fit", "--scores", str(tmp_path / "nope.csv"),
                 "--scale-min", "0", "--scale-max", "5", "--scale-step", "1"])
    assert code == EXIT_INPUT


def test_fit_requires_scale_max(tmp_path):
    with pytest.raises(SystemExit):
        main(["fit", "--scores", "x.csv"])


def test_bootstrap_reproducible_bytes(tmp_path):
    out = simulate_files(tmp_path, seed=3, I=6, J=4, R=3, M=8, theta=2.0)
    blobs = []
    for name in ("b1", "b2"):
        path = tmp_path / f"{name}.json"
        code = main(["bootstrap", *data_flags(out, 8), "--method", "greedy-local",
                     "--B", "30", "--level", "0.9", "--seed", "11", "--out", str(path)])
        assert code == EXIT_OK
        csv_path = path.with_suffix(".json.ranks.csv")
        blobs.append((path.read_bytes(), csv_path.read_bytes()))
    assert blobs[0][0] == blobs[1][0]
    assert blobs[0][1] == blobs[1][1]
    header = blobs[0][1].decode().splitlines()[0]
    assert header == "object,point_rank,lower,upper"


def test_benchmark_csv(tmp_path):
    path = tmp_path / "bench.csv"
    code = main(["benchmark", "--grid-I", "4", "--grid-M", "5", "--grid-J", "4",
                 "--grid-R", "3", "--grid-theta", "2", "--trials", "2",
                 "--seed", "1", "--out", str(path)])
    assert code == EXIT_OK
    lines = path.read_text().splitlines()
    assert lines[0].startswith("I,M,J,R,theta,trial,algorithm,seconds,nodes_expanded")
    assert len(lines) == 1 + 2 * 5
    for line in lines[1:]:
        if ",exact-" in line:
            cells = line.split(",")
            assert cells[11] == "1" and cells[12] == "0"  # exact_match, kendall distance


def compare_fixture(tmp_path):
    scores_text = "judge,a,b,c,d,e\n" + "".join(
        f"j{i},1,3,5,7,9\n" for i in range(1, 7))
    rank_rows = ["j1,a,b", "j2,a,b", "j3,b,a", "j4,a,c", "j5,b,c", "j6,a,b"]
    rankings_text = "judge,rank1,rank2\n" + "\n".join(rank_rows) + "\n"
    scores = write(tmp_path / "cs.csv", scores_text)
    rankings = write(tmp_path / "cr.csv", rankings_text)
    return scores, rankings


def test_compare_command(tmp_path):
    scores, rankings = compare_fixture(tmp_path)
    path = tmp_path / "compare.json"
    code = main(["compare", "--scores", scores, "--rankings", rankings,
                 "--scale-min", "0", "--scale-max", "10", "--scale-step", "1",
                 "--B", "40", "--seed", "4", "--out", str(path)])
    assert code == EXIT_OK
    doc = json.loads(path.read_text())
    models = doc["models"]
    assert set(models) == {"mallows-binomial", "converted-scores", "only-scores",
                           "converted-rankings", "only-rankings"}
    assert "theta" not in models["only-scores"]
    assert "theta" not in models["converted-scores"]
    assert "p" not in models["converted-rankings"]
    assert "p" not in models["only-rankings"]
    assert "theta" in models["mallows-binomial"]
    assert "p" in models["mallows-binomial"]
    # never-ranked objects d and e: the rankings-only model cannot pin them
    # any tighter than the joint model does
    labels = doc["labels"]
    mb = models["mallows-binomial"]["rank_intervals"]
    onlyr = models["only-rankings"]["rank_intervals"]
    for obj in ("d", "e"):
        j = labels.index(obj)
        width_mb = mb[j][1] - mb[j][0]
        width_or = onlyr[j][1] - onlyr[j][0]
        assert width_or >= width_mb


def test_bias_demo_values_and_permutation(tmp_path, capsys):
    path = tmp_path / "bias.json"
    code = main(["bias-demo", "--out", str(path)])
    assert code == EXIT_OK
    captured = capsys.readouterr().out
    assert "P(theta_hat at cap)" in captured
    doc = json.loads(path.read_text())
    assert np.allclose(doc["bias"], [0.0419, 0.0192, -0.0610], atol=1e-3)
    assert doc["theta_cap_probability"] > 0
    flipped = tmp_path / "bias2.json"
    code = main(["bias-demo", "--p0", "0.9,0.4,0.1", "--out", str(flipped)])
    assert code == EXIT_OK
    doc2 = json.loads(flipped.read_text())
    assert np.allclose(doc2["bias"], doc["bias"][::-1], atol=1e-10)


def test_bias_demo_deterministic(tmp_path, capsys):
    assert main(["bias-demo"]) == EXIT_OK
    first = capsys.readouterr().out
    assert main(["bias-demo"]) == EXIT_OK
    second = capsys.readouterr().out
    assert first == second

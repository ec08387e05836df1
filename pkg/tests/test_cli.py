import json
import subprocess
import sys

import numpy as np
import pytest

from epsnet import AdapterModel, EventAnnotation, FrameStream, full_index
from epsnet import io
from epsnet.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def usage_error(capsys, *argv):
    with pytest.raises(SystemExit) as exc:
        main([str(a) for a in argv])
    capsys.readouterr()
    return exc.value.code


@pytest.fixture
def bundle(tmp_path_factory):
    d = tmp_path_factory.mktemp("bundle")
    assert main(["synth", "--seed", "0", "--output-dir", str(d), "--rotation-angle", "2.0",
                 "--adapter-pairs", "100", "--oracle-rerank"]) == 0
    return d


def test_synth_is_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        code, out, _ = run(capsys, "synth", "--seed", 4, "--output-dir", tmp_path / name)
        assert code == 0
        assert json.loads(out)["n_frames"] == 790
    for f in ("stream.esf", "events.jsonl", "bundle.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_filter_duplicate_fixture(tmp_path, capsys):
    # 5 scenes x 20 near-identical frames -> 5 keyframes, compression 20x
    rng = np.random.default_rng(0)
    X = np.vstack([np.eye(8)[i] + 0.01 * rng.standard_normal((20, 8)) for i in range(5)])
    io.write_stream(tmp_path / "dup.esf", FrameStream(X, fps=10))
    code, out, err = run(capsys, "filter", "--input", tmp_path / "dup.esf", "--tau", 0.92, "--output", tmp_path / "i.json")
    assert code == 0 and err == ""
    summary = json.loads(out)
    assert summary["retained"] == 5 and summary["compression_ratio"] == 20.0
    first = (tmp_path / "i.json").read_bytes()
    run(capsys, "filter", "--input", tmp_path / "dup.esf", "--tau", 0.92, "--output", tmp_path / "i.json")
    assert (tmp_path / "i.json").read_bytes() == first


@pytest.mark.parametrize(
    "argv",
    [
        ["filter", "--input", "x", "--tau", "1.5", "--output", "y"],
        ["filter", "--input", "x", "--tau", "abc", "--output", "y"],
        ["select", "--input", "x", "--method", "fp", "--k", "0", "--output", "y"],
        ["select", "--input", "x", "--method", "bogus", "--k", "3", "--output", "y"],
        ["sweep", "--input", "x", "--events", "e", "--taus", ""],
        ["sweep", "--input", "x", "--events", "e", "--taus", "0.9,1.2"],
        ["train-adapter", "--pairs", "p", "--epochs", "-1", "--output", "c"],
        ["eval", "--index", "i", "--events", "e", "--tolerance", "-1"],
        [],
    ],
)
def test_usage_errors_exit_2(capsys, argv):
    assert usage_error(capsys, *argv) == 2


@pytest.mark.parametrize("method", ["kmeans", "fp", "uniform", "random"])
def test_select_each_method(bundle, tmp_path, capsys, method):
    code, out, _ = run(capsys, "select", "--input", bundle / "stream.esf", "--method", method, "--k", 30,
                       "--seed", 1, "--output", tmp_path / "s.json")
    assert code == 0
    idx = io.read_index(tmp_path / "s.json")
    assert len(idx) == 30 and idx.method == method
    assert json.loads(out)["retained"] == 30


def test_select_fp_k_equals_n(tmp_path, capsys):
    io.write_stream(tmp_path / "s.esf", FrameStream(np.eye(6)))
    run(capsys, "select", "--input", tmp_path / "s.esf", "--method", "fp", "--k", 6, "--output", tmp_path / "i.json")
    assert io.read_index(tmp_path / "i.json").frame_ids.tolist() == list(range(6))


def test_select_k_too_large_is_library_error(tmp_path, capsys):
    io.write_stream(tmp_path / "s.esf", FrameStream(np.eye(3)))
    code, out, err = run(capsys, "select", "--input", tmp_path / "s.esf", "--method", "uniform", "--k", 9,
                         "--output", tmp_path / "i.json")
    assert code == 1 and out == ""
    assert "n_frames" in json.loads(err)["message"]


def test_eval_full_vs_novelty(bundle, tmp_path, capsys):
    run(capsys, "filter", "--input", bundle / "stream.esf", "--output", tmp_path / "nov.json")
    stream = io.read_stream(bundle / "stream.esf")
    io.write_index(tmp_path / "full.json", full_index(stream))
    rates = {}
    for name in ("nov", "full"):
        code, out, _ = run(capsys, "eval", "--index", tmp_path / f"{name}.json", "--events", bundle / "events.jsonl")
        assert code == 0
        rates[name] = json.loads(out)["aggregate"]["hit_at_k"]
    assert rates["nov"] > rates["full"]


def test_eval_k_larger_than_index(bundle, tmp_path, capsys):
    run(capsys, "filter", "--input", bundle / "stream.esf", "--output", tmp_path / "nov.json")
    rates = []
    for k in (5, 30, 1000):
        _, out, _ = run(capsys, "eval", "--index", tmp_path / "nov.json", "--events", bundle / "events.jsonl", "--k", k)
        rates.append(json.loads(out)["aggregate"]["hit_at_k"])
    assert rates == sorted(rates) and rates[-1] == 1.0


def test_eval_rerank_and_output_file(bundle, tmp_path, capsys):
    run(capsys, "filter", "--input", bundle / "stream.esf", "--output", tmp_path / "nov.json")
    code, out, _ = run(capsys, "eval", "--index", tmp_path / "nov.json", "--events", bundle / "events.jsonl",
                       "--rerank-embeddings", bundle / "rerank.esf", "--candidates", 50, "--output", tmp_path / "r.json")
    assert code == 0 and out == ""
    rep = io.read_report(tmp_path / "r.json")
    assert rep.aggregate["rerank_candidates"] == 50


def test_eval_missing_adapter(bundle, tmp_path, capsys):
    run(capsys, "filter", "--input", bundle / "stream.esf", "--output", tmp_path / "nov.json")
    missing = tmp_path / "nowhere.lita"
    code, out, err = run(capsys, "eval", "--index", tmp_path / "nov.json", "--events", bundle / "events.jsonl",
                         "--adapter", missing)
    assert code == 1 and out == ""
    assert str(missing) in err


def test_train_adapter_and_eval(bundle, tmp_path, capsys):
    code, out, _ = run(capsys, "train-adapter", "--pairs", bundle / "pairs.jsonl", "--epochs", 50, "--hidden", 16,
                       "--output", tmp_path / "a.lita")
    assert code == 0
    res = json.loads(out)
    assert len(res["train_loss_curve"]) == 50 and res["holdout_loss"] is not None
    run(capsys, "filter", "--input", bundle / "stream.esf", "--output", tmp_path / "nov.json")
    code, out, _ = run(capsys, "eval", "--index", tmp_path / "nov.json", "--events", bundle / "events.jsonl",
                       "--adapter", tmp_path / "a.lita")
    assert code == 0 and json.loads(out)["aggregate"]["adapter"] is True


def test_train_adapter_zero_epochs_is_init(bundle, tmp_path, capsys):
    run(capsys, "train-adapter", "--pairs", bundle / "pairs.jsonl", "--epochs", 0, "--hidden", 8, "--seed", 3,
        "--output", tmp_path / "a.lita")
    assert io.read_adapter(tmp_path / "a.lita") == AdapterModel.init(64, 8, seed=3)


def test_compare_json_text_and_determinism(bundle, tmp_path, capsys):
    args = ["compare", "--input", bundle / "stream.esf", "--events", bundle / "events.jsonl", "--seed", 2]
    _, a, _ = run(capsys, *args)
    _, b, _ = run(capsys, *args)
    assert a == b
    table = json.loads(a)
    assert [r["method"] for r in table["rows"]] == ["full", "novelty", "kmeans", "fp", "uniform", "random"]
    assert "sign_test_p" in table["stats"]
    _, text, _ = run(capsys, *args, "--format", "text")
    assert text.splitlines()[0].split() == ["method", "frames", "Hit@5"]


def test_compare_identical_frames(tmp_path, capsys):
    io.write_stream(tmp_path / "s.esf", FrameStream(np.tile([1.0, 1.0], (40, 1)), fps=10))
    io.write_annotations(tmp_path / "e.jsonl", [EventAnnotation(0, "s", 0.0, 3.9, [1.0, 1.0])])
    _, out, _ = run(capsys, "compare", "--input", tmp_path / "s.esf", "--events", tmp_path / "e.jsonl")
    assert len({r["hit_at_k"] for r in json.loads(out)["rows"]}) == 1


def test_sweep_default_grid_and_single_tau(bundle, capsys):
    _, out, _ = run(capsys, "sweep", "--input", bundle / "stream.esf", "--events", bundle / "events.jsonl")
    rows = json.loads(out)["rows"]
    assert [r["tau"] for r in rows] == [0.90, 0.92, 0.94, 0.95, 0.96]
    comp = [r["compression_ratio"] for r in rows]
    assert comp == sorted(comp, reverse=True)
    _, one, _ = run(capsys, "sweep", "--input", bundle / "stream.esf", "--events", bundle / "events.jsonl", "--taus", "0.92")
    _, cmp, _ = run(capsys, "compare", "--input", bundle / "stream.esf", "--events", bundle / "events.jsonl")
    row = json.loads(one)["rows"][0]
    table = {r["method"]: r["hit_at_k"] for r in json.loads(cmp)["rows"]}
    assert (row["novelty"], row["uniform"], row["full"]) == (table["novelty"], table["uniform"], table["full"])


def test_corrupt_input_is_exit_1(tmp_path, capsys):
    (tmp_path / "bad.esf").write_bytes(b"ESF1garbage")
    code, out, err = run(capsys, "filter", "--input", tmp_path / "bad.esf", "--output", tmp_path / "i.json")
    assert code == 1 and out == ""
    assert json.loads(err)["error"] in {"TruncationError", "FormatError"}


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "epsnet.cli", "synth", "--output-dir", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["preset"] == "crowd_out"

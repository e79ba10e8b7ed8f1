import json

import pytest

from skelgen.cli import main
from skelgen.corpus import load_corpus
from skelgen.gateway import prompt_hash
from skelgen.metrics import tokenize


def run(args):
    return main([str(a) for a in args])


@pytest.fixture
def raw_train(data_dir):
    return data_dir / "raw_train.jsonl"


@pytest.fixture
def train_path(data_dir):
    return data_dir / "train_small.jsonl"


@pytest.fixture
def test_path(data_dir):
    return data_dir / "test_small.jsonl"


# --- build-data ---


def test_build_data_succeeds_on_fixture(raw_train, tmp_path, capsys):
    out = tmp_path / "skel.jsonl"
    code = run(["build-data", "--in", raw_train, "--out", out, "--backend", "mock"])
    assert code == 0
    built = load_corpus(out, name="train")
    assert len(built) == 20
    assert all(example.skeleton for example in built)
    assert "built 20/20" in capsys.readouterr().out


def test_build_data_fraction_deterministic(raw_train, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / f"{name}.jsonl"
        code = run(
            ["build-data", "--in", raw_train, "--out", out, "--backend", "mock", "--fraction", "0.1", "--seed", "7"]
        )
        assert code == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert len(outs[0].splitlines()) == 2  # ceil(0.1 * 20)


def test_build_data_missing_input_exits_2(tmp_path, capsys):
    code = run(["build-data", "--in", tmp_path / "nope.jsonl", "--out", tmp_path / "o.jsonl"])
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_build_data_report_and_max_drop_rate(raw_train, tmp_path, capsys):
    out = tmp_path / "skel.jsonl"
    non_interrogative = tmp_path / "hard.jsonl"
    rows = [
        {"id": "h1", "triples": [["a", "r", "b"]], "answer": "b", "question": "summarize the treaty."},
        {"id": "h2", "triples": [["c", "r", "d"]], "answer": "d", "question": "what is c?"},
    ]
    non_interrogative.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    # h1 has no rule candidate and the mock's llm response is blanked out
    from skelgen.gateway import render_skeleton_prompt

    fixtures = {prompt_hash(render_skeleton_prompt("summarize the treaty.")): [""]}
    fixtures_path = tmp_path / "fixtures.json"
    fixtures_path.write_text(json.dumps(fixtures), encoding="utf-8")
    report = tmp_path / "report.jsonl"
    code = run(
        [
            "build-data",
            "--in", non_interrogative,
            "--out", out,
            "--backend", "mock",
            "--mock-fixtures", fixtures_path,
            "--report", report,
            "--max-drop-rate", "0.4",
        ]
    )
    assert code == 1  # 1 of 2 dropped > 40%
    assert "drop rate" in capsys.readouterr().err
    assert report.exists()
    assert len(load_corpus(out, name="train")) == 1


def test_unknown_flag_exits_2(raw_train, tmp_path):
    with pytest.raises(SystemExit) as info:
        run(["build-data", "--in", raw_train, "--out", tmp_path / "o.jsonl", "--frobnicate"])
    assert info.value.code == 2


def test_help_lists_flags(capsys):
    with pytest.raises(SystemExit) as info:
        run(["generate", "--help"])
    assert info.value.code == 0
    text = capsys.readouterr().out
    for flag in ("--test", "--train", "--out", "--store", "--mode", "--strategy", "--k", "--n", "--seed", "--sample"):
        assert flag in text


# --- embed ---


def test_embed_writes_store(train_path, tmp_path, capsys):
    store_path = tmp_path / "train.store"
    code = run(["embed", "--in", train_path, "--out", store_path, "--strategy", "input_skeleton_emb"])
    assert code == 0
    header = store_path.read_bytes().split(b"\n", 1)[0].decode()
    assert "strategy=input_skeleton_emb" in header
    assert "n=20" in header


def test_embed_requires_skeletons_for_skeleton_strategy(raw_train, tmp_path, capsys):
    code = run(["embed", "--in", raw_train, "--out", tmp_path / "s.store", "--strategy", "input_skeleton_emb"])
    assert code == 1
    assert "skeleton" in capsys.readouterr().err


# --- generate ---


def test_generate_end_to_end_with_persisted_store(train_path, test_path, tmp_path, capsys):
    store_path = tmp_path / "train.store"
    assert run(["embed", "--in", train_path, "--out", store_path, "--strategy", "input_skeleton_emb"]) == 0
    out = tmp_path / "results.jsonl"
    code = run(
        [
            "generate",
            "--test", test_path,
            "--train", train_path,
            "--store", store_path,
            "--out", out,
            "--backend", "mock",
            "--seed", "7",
            "--k", "4",
            "--n", "5",
            "--sample", "6",
        ]
    )
    assert code == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 6
    record = json.loads(lines[0])
    assert record["predicted_question"] in record["raw_samples"]
    assert "BLEU-1" in capsys.readouterr().out


def test_generate_store_strategy_mismatch_exits_2(train_path, test_path, tmp_path, capsys):
    store_path = tmp_path / "train.store"
    assert run(["embed", "--in", train_path, "--out", store_path, "--strategy", "input_emb"]) == 0
    code = run(
        [
            "generate",
            "--test", test_path,
            "--train", train_path,
            "--store", store_path,
            "--out", tmp_path / "r.jsonl",
            "--strategy", "input_skeleton_emb",
            "--backend", "mock",
        ]
    )
    assert code == 2
    assert "built with" in capsys.readouterr().err


def test_generate_deterministic_across_runs(train_path, test_path, tmp_path):
    blobs = []
    for name in ("a", "b"):
        out = tmp_path / f"{name}.jsonl"
        code = run(
            [
                "generate",
                "--test", test_path,
                "--train", train_path,
                "--out", out,
                "--backend", "mock",
                "--seed", "3",
                "--k", "3",
                "--n", "4",
                "--sample", "5",
                "--strategy", "random",
            ]
        )
        assert code == 0
        blobs.append(out.read_bytes())
    assert blobs[0] == blobs[1]


def test_generate_vanilla_vs_skeleton_prompts_differ_only_on_skeleton_lines(train_path, test_path, tmp_path):
    results = {}
    for mode in ("vanilla", "skeleton"):
        out = tmp_path / f"{mode}.jsonl"
        code = run(
            [
                "generate",
                "--test", test_path,
                "--train", train_path,
                "--out", out,
                "--backend", "mock",
                "--seed", "7",
                "--k", "3",
                "--n", "2",
                "--sample", "4",
                "--mode", mode,
                "--strategy", "input_skeleton_emb",
            ]
        )
        assert code == 0
        results[mode] = [json.loads(line) for line in out.read_text(encoding="utf-8").splitlines()]
    for vanilla_rec, skeleton_rec in zip(results["vanilla"], results["skeleton"]):
        assert vanilla_rec["example_id"] == skeleton_rec["example_id"]
        skeleton_prompt = skeleton_rec["prompt"].splitlines()
        vanilla_prompt = vanilla_rec["prompt"].splitlines()
        assert [l for l in skeleton_prompt if not l.startswith("Skeleton: ")] == vanilla_prompt
        assert any(l.startswith("Skeleton: ") for l in skeleton_prompt)


# --- evaluate ---


def test_evaluate_all_correct_fixture(tmp_path, capsys):
    results = tmp_path / "results.jsonl"
    rows = [
        {"example_id": f"e{i}", "predicted_question": f"what is thing {i}?", "gold_question": f"what is thing {i}?"}
        for i in range(4)
    ]
    results.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    json_path = tmp_path / "report.json"
    code = run(["evaluate", "--results", results, "--json", json_path])
    assert code == 0
    out = capsys.readouterr().out
    assert out.count("1.0000") == 5  # BLEU-1..4 and ROUGE-L
    data = json.loads(json_path.read_text(encoding="utf-8"))
    assert data["bleu"]["4"] == 1.0
    assert data["rouge_l"] == 1.0
    assert data["count"] == 4


def test_evaluate_empty_results_fails(tmp_path, capsys):
    results = tmp_path / "empty.jsonl"
    results.write_text("", encoding="utf-8")
    assert run(["evaluate", "--results", results]) == 1


# --- ablate ---


def test_ablate_cross_product_table(train_path, test_path, tmp_path, capsys):
    code = run(
        [
            "ablate",
            "--test", test_path,
            "--train", train_path,
            "--out-dir", tmp_path / "arms",
            "--k", "2,3",
            "--strategy", "random,input_emb,input_skeleton_emb",
            "--backend", "mock",
            "--seed", "5",
            "--n", "2",
            "--sample", "4",
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    table_lines = [line for line in out.splitlines() if line and not line.startswith(("strategy", "generated", "#"))]
    rows = [line for line in table_lines if line.split()[0] in ("random", "input_emb", "input_skeleton_emb")]
    assert len(rows) == 6
    assert len(list((tmp_path / "arms").glob("results_*.jsonl"))) == 6


def test_ablate_rejects_unknown_strategy(train_path, test_path, tmp_path, capsys):
    code = run(
        ["ablate", "--test", test_path, "--train", train_path, "--out-dir", tmp_path, "--strategy", "nearest"]
    )
    assert code == 2


# --- config file ---


def test_config_file_supplies_defaults_flags_override(train_path, test_path, tmp_path):
    config = tmp_path / "pipeline.cfg"
    config.write_text("k = 3\nn = 2\nseed = 11\nmode = skeleton\n# comment\n", encoding="utf-8")
    out = tmp_path / "results.jsonl"
    code = run(
        [
            "generate",
            "--config", config,
            "--test", test_path,
            "--train", train_path,
            "--out", out,
            "--backend", "mock",
            "--sample", "3",
            "--n", "4",  # flag beats config
        ]
    )
    assert code == 0
    record = json.loads(out.read_text(encoding="utf-8").splitlines()[0])
    assert len(record["selected_example_ids"]) == 3  # from config
    assert len(record["raw_samples"]) == 4  # from flag


def test_unknown_config_key_exits_2(train_path, test_path, tmp_path, capsys):
    config = tmp_path / "bad.cfg"
    config.write_text("tempreture = 0.7\n", encoding="utf-8")
    code = run(
        ["generate", "--config", config, "--test", test_path, "--train", train_path, "--out", tmp_path / "r.jsonl"]
    )
    assert code == 2
    assert "unknown config key" in capsys.readouterr().err


def test_tokenizer_available_for_downstream_checks():
    # guard against accidental import cycles in the CLI module
    assert tokenize("ok?") == ["ok", "?"]

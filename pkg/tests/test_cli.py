"""Command-line interface tests: full chain, exit codes, idempotence."""

import json
from pathlib import Path

import pytest

from promptbank.cli import main
from promptbank.config import PRESETS, config_hash, parse_kv_file, resolve_config
from promptbank.errors import ConfigError


def run_chain(fix: Path, out: Path, seed: str = "11", threads: str = "1",
              mode: str = "in_domain", tau: str = "0.6") -> None:
    """Drive every pipeline stage on the retrieval fixture."""
    caps = str(fix / "captions.jsonl")
    shared = ["--out-dir", str(out), "--seed", seed, "--threads", threads,
              "--np-size", "100", "--sg-size", "100"]
    assert main(["sg-candidates", "--captions", caps] + shared) == 0
    assert main(["sg-select", "--captions", caps,
                 "--bge-emb", str(fix / "bge.mgpb")] + shared) == 0
    assert main(["build-banks", "--captions", caps,
                 "--selections", str(out / "sg_selections.jsonl")] + shared) == 0
    assert main(["classify",
                 "--np-bank", str(out / "np_bank.json"),
                 "--sg-bank", str(out / "sg_bank.json"),
                 "--taxonomy", str(fix / "taxonomy.json"),
                 "--bge-emb", str(fix / "bge.mgpb")] + shared) == 0
    assert main(["stats", "--captions", caps,
                 "--model", str(out / "category_model.json"),
                 "--selections", str(out / "sg_selections.jsonl"),
                 "--mode", mode] + shared) == 0
    assert main(["retrieve",
                 "--features", str(fix / "video_feats.mgpv"),
                 "--np-bank", str(out / "np_bank.json"),
                 "--sg-bank", str(out / "sg_bank.json"),
                 "--ec-bank", str(out / "ec_bank.json"),
                 "--model", str(out / "category_model.json"),
                 "--stats", str(out / "stats.json"),
                 "--np-emb", str(fix / "clip_np.mgpb"),
                 "--sg-emb", str(fix / "clip_sg.mgpb"),
                 "--ec-emb", str(fix / "clip_ec.mgpb"),
                 "--mode", mode, "--tau", tau] + shared) == 0
    # train and infer exports each own a directory: both write the
    # prompt_vectors.mgpb / manifest.json file set
    train_shared = ["--out-dir", str(out / "train")] + shared[2:]
    infer_shared = ["--out-dir", str(out / "infer")] + shared[2:]
    assert main(["assemble-train", "--captions", caps,
                 "--np-bank", str(out / "np_bank.json"),
                 "--sg-bank", str(out / "sg_bank.json"),
                 "--np-emb", str(fix / "clip_np.mgpb"),
                 "--sg-emb", str(fix / "clip_sg.mgpb"),
                 "--ec-emb", str(fix / "clip_ec.mgpb"),
                 "--k-p", "3", "--k-g", "2", "--neighbors", "2",
                 "--noise-var", "0.01"] + train_shared) == 0
    assert main(["assemble-infer",
                 "--features", str(fix / "video_feats.mgpv"),
                 "--np-bank", str(out / "np_bank.json"),
                 "--sg-bank", str(out / "sg_bank.json"),
                 "--ec-bank", str(out / "ec_bank.json"),
                 "--model", str(out / "category_model.json"),
                 "--stats", str(out / "stats.json"),
                 "--np-emb", str(fix / "clip_np.mgpb"),
                 "--sg-emb", str(fix / "clip_sg.mgpb"),
                 "--ec-emb", str(fix / "clip_ec.mgpb"),
                 "--mode", mode, "--tau", tau] + infer_shared) == 0


PIPELINE_FILES = [
    "sg_candidates.jsonl", "strings.txt", "sg_candidates_meta.json",
    "sg_selections.jsonl", "sg_selections_meta.json",
    "np_bank.json", "sg_bank.json", "ec_bank.json",
    "category_model.json", "stats.json",
    "retrieved.jsonl", "ec_vectors.mgpb", "ec_vectors.keys", "retrieve_meta.json",
    "train/prompts_train.jsonl", "train/prompt_vectors.mgpb",
    "train/prompt_vectors.keys", "train/manifest.json",
    "infer/prompts_infer.jsonl", "infer/prompt_vectors.mgpb",
    "infer/prompt_vectors.keys", "infer/manifest.json",
]


class TestFullChain:
    def test_in_domain_chain_produces_all_files(self, tmp_path, retrieval_dir):
        out = tmp_path / "out"
        run_chain(retrieval_dir, out)
        for name in PIPELINE_FILES:
            assert (out / name).exists(), name
        retrieved = [json.loads(line) for line in
                     (out / "retrieved.jsonl").read_text().splitlines()]
        assert [r["video_id"] for r in retrieved] == ["vid1", "vid2", "vid3", "vid4"]
        vid1 = retrieved[0]
        assert [x["key"] for x in vid1["np"]] == [
            "a man with a red guitar", "a small dog"]
        assert len(vid1["ec_weights_topk"]) == 8

    def test_cross_domain_chain(self, tmp_path, retrieval_dir):
        out = tmp_path / "out"
        run_chain(retrieval_dir, out, mode="cross_domain", tau="1.0")
        stats = json.loads((out / "stats.json").read_text())
        assert stats["mode"] == "cross_domain"
        assert stats["base_b"] == 4
        quotas = {cat: stats["np"][cat]["quota"] for cat in stats["np"]}
        assert quotas == {"People": 2, "Object": 2, "Place": 4}
        retrieved = [json.loads(line) for line in
                     (out / "retrieved.jsonl").read_text().splitlines()]
        assert len(retrieved[0]["np"]) == 6  # 2 + 2 + whole Place category

    def test_evaluate_and_selfbleu(self, tmp_path, retrieval_dir, capsys):
        out = tmp_path / "out"
        code = main(["evaluate",
                     "--predictions", str(retrieval_dir / "predictions.jsonl"),
                     "--references", str(retrieval_dir / "references.jsonl"),
                     "--out-dir", str(out)])
        assert code == 0
        printed = json.loads(capsys.readouterr().out.strip())
        assert set(printed) == {"bleu4", "rouge_l", "cider", "self_bleu"}
        report = json.loads((out / "report.json").read_text())
        assert "config_hash" in report

        sentences = tmp_path / "s.txt"
        sentences.write_text("a man runs\na man runs\na dog sleeps\n")
        assert main(["selfbleu", "--sentences", str(sentences),
                     "--out-dir", str(out)]) == 0

    def test_idempotent_reruns_byte_identical(self, tmp_path, retrieval_dir):
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        run_chain(retrieval_dir, out1, threads="1")
        run_chain(retrieval_dir, out2, threads="4")
        for name in PIPELINE_FILES:
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


class TestSpecExamples:
    def test_build_banks_preset_msvd_records_defaults(self, tmp_path, retrieval_dir):
        out = tmp_path / "out"
        code = main(["build-banks", "--preset", "msvd",
                     "--captions", str(retrieval_dir / "captions.jsonl"),
                     "--out-dir", str(out)])
        assert code == 0
        doc = json.loads((out / "np_bank.json").read_text())
        cfg = doc["config"]
        assert cfg["n_p"] == 1000
        assert cfg["k_p"] == 13 and cfg["k_g"] == 16
        assert cfg["m"] == 5 and cfg["lambda_sq"] == 0.01
        assert len(doc["config_hash"]) == 64

    def test_stats_cli_reproduces_worked_example(self, tmp_path, fixtures_dir):
        fix = fixtures_dir / "alg1"
        out = tmp_path / "out"
        caps = str(fix / "captions.jsonl")
        shared = ["--out-dir", str(out), "--np-size", "10"]
        assert main(["build-banks", "--captions", caps] + shared) == 0
        assert main(["classify", "--np-bank", str(out / "np_bank.json"),
                     "--taxonomy", str(fix / "taxonomy.json")] + shared) == 0
        assert main(["stats", "--captions", caps,
                     "--model", str(out / "category_model.json"),
                     "--mode", "in_domain"] + shared) == 0
        stats = json.loads((out / "stats.json").read_text())
        assert stats["np"]["People"]["p"] == 0.5
        assert stats["np"]["People"]["mu"] == 1.0
        assert stats["np"]["Object"]["p"] == 1.0
        assert stats["np"]["Object"]["mu"] == 1.0


class TestExitCodes:
    def test_missing_input_is_3(self, tmp_path):
        assert main(["sg-candidates", "--captions", str(tmp_path / "none.jsonl"),
                     "--out-dir", str(tmp_path)]) == 3

    def test_invalid_config_is_2(self, tmp_path, retrieval_dir):
        caps = str(retrieval_dir / "captions.jsonl")
        assert main(["sg-candidates", "--captions", caps,
                     "--tau", "7", "--out-dir", str(tmp_path)]) == 2

    def test_runtime_failure_is_1(self, tmp_path, retrieval_dir):
        # corpus references embeddings that do not exist in the bank
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"id":"z","video_id":"v","text":"totally new words",'
                       '"noun_phrases":[],"triples":[["new","do","words"]]}\n')
        assert main(["sg-select", "--captions", str(bad),
                     "--bge-emb", str(retrieval_dir / "bge.mgpb"),
                     "--out-dir", str(tmp_path)]) == 1


class TestConfig:
    def test_presets_carry_shipped_defaults(self):
        assert PRESETS["msvd"]["n_p"] == 1000
        assert PRESETS["msvd"]["k_p"] == 13
        assert PRESETS["msvd"]["k_g"] == 16
        assert PRESETS["msvd"]["m"] == 5
        assert PRESETS["msvd"]["lambda_sq"] == 0.01
        assert PRESETS["msvd"]["tau"] == 0.6
        assert PRESETS["msvd"]["n_g"] == 37711
        assert PRESETS["msvd"]["n_c"] == 48774
        assert PRESETS["msrvtt"]["tau"] == 0.8
        assert PRESETS["msrvtt"]["k_p"] == 14
        assert PRESETS["msrvtt"]["k_g"] == 19
        assert PRESETS["msrvtt"]["n_c"] == 130260
        assert PRESETS["vatex"]["tau"] == 0.6
        assert PRESETS["vatex"]["n_p"] == 3000
        assert PRESETS["vatex"]["n_g"] == 400000
        assert PRESETS["msrvtt_to_msvd"]["k_p"] == 12
        assert PRESETS["msrvtt_to_msvd"]["k_g"] == 34
        assert PRESETS["msrvtt_to_msvd"]["tau"] == 0.5
        assert PRESETS["msvd_to_msrvtt"]["k_p"] == 14
        assert PRESETS["msvd_to_msrvtt"]["k_g"] == 25

    def test_preset_resolution_and_hash_stability(self):
        one = resolve_config("msvd")
        two = resolve_config("msvd")
        assert config_hash(one) == config_hash(two)
        three = resolve_config("msvd", overrides={"seed": 9})
        assert config_hash(one) != config_hash(three)

    def test_kv_file_parsing(self, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text(
            "# comment\n"
            'dataset = "demo"\n'
            "tau = 0.7\n"
            "seed = 42\n"
            "n_p = 50\n"
            "retention = \"per_item\"  # trailing comment\n"
        )
        values = parse_kv_file(cfg)
        assert values == {"dataset": "demo", "tau": 0.7, "seed": 42,
                          "n_p": 50, "retention": "per_item"}
        resolved = resolve_config(None, cfg)
        assert resolved.tau == 0.7 and resolved.retention == "per_item"

    def test_flags_override_file(self, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text("tau = 0.7\n")
        resolved = resolve_config("msvd", cfg, {"tau": 0.9})
        assert resolved.tau == 0.9

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text("banana = 1\n")
        with pytest.raises(ConfigError):
            resolve_config(None, cfg)

    def test_help_mentions_symbols(self, capsys):
        with pytest.raises(SystemExit):
            main(["retrieve", "--help"])
        text = capsys.readouterr().out
        for symbol in ("N_p", "K_p", "K_g", "tau", "B", "M", "lambda^2"):
            assert symbol in text

    def test_log_level_env_var(self, monkeypatch, capsys):
        import logging

        from promptbank.logs import setup_logging
        monkeypatch.setenv("PROMPTBANK_LOG", "debug")
        setup_logging()
        assert logging.getLogger().level == logging.DEBUG
        monkeypatch.setenv("PROMPTBANK_LOG", "info")
        setup_logging()
        assert logging.getLogger().level == logging.INFO
        logging.getLogger("promptbank.test").info("structured line")
        err = capsys.readouterr().err
        doc = json.loads(err.strip().splitlines()[-1])
        assert doc["level"] == "info" and doc["msg"] == "structured line"

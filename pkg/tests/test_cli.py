import json
from pathlib import Path

import pytest

from simpctl import agreement as agr
from simpctl.cli import main
from simpctl.metrics import sari

from test_conllu import conllu_token_line


@pytest.fixture
def pairs_tsv(tmp_path):
    path = tmp_path / "pairs.tsv"
    path.write_text(
        "the cat sat on the mat\tthe cat sat\ta cat sat down\n"
        "a dog barks at night\tdogs bark at night\tthe dog barks\n",
        encoding="utf-8",
    )
    return path


@pytest.fixture
def freq_table_file(tmp_path):
    path = tmp_path / "freq.txt"
    path.write_text("the\na\ncat\nsat\non\nmat\ndog\nbarks\nat\nnight\n", encoding="utf-8")
    return path


class TestSplitCommand:
    def test_writes_tsvs_and_manifest(self, tmp_path):
        corpus = {
            f"doc{i}": {"source": [f"sentence number {i}"], "refs": [[f"ref {i} a", f"ref {i} b"]]}
            for i in range(10)
        }
        corpus_path = tmp_path / "corpus.json"
        corpus_path.write_text(json.dumps(corpus), encoding="utf-8")
        out = tmp_path / "splits"
        code = main(
            [
                "split",
                "--corpus", str(corpus_path),
                "--format", "plaba-json",
                "--ratios", "8:1:1",
                "--seed", "3",
                "--out-dir", str(out),
            ]
        )
        assert code == 0
        manifest = json.loads((out / "split-manifest.json").read_text())
        assert manifest["counts"] == {"train": 8, "validation": 1, "test": 1}

    def test_byte_identical_outputs_on_rerun(self, tmp_path):
        corpus = {
            f"doc{i}": {"source": [f"sentence number {i}"], "refs": [[f"ref {i} a", f"ref {i} b"]]}
            for i in range(12)
        }
        corpus_path = tmp_path / "corpus.json"
        corpus_path.write_text(json.dumps(corpus), encoding="utf-8")
        outputs = []
        for run in ("one", "two"):
            out = tmp_path / run
            assert main(
                ["split", "--corpus", str(corpus_path), "--seed", "9", "--out-dir", str(out)]
            ) == 0
            outputs.append(
                {p.name: p.read_bytes() for p in sorted(out.iterdir())}
            )
        assert outputs[0] == outputs[1]

    def test_bad_ratios_exit_1(self, tmp_path, capsys):
        code = main(["split", "--corpus", "x", "--ratios", "nope", "--out-dir", str(tmp_path)])
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestAnnotateCommand:
    def test_end_to_end(self, tmp_path, freq_table_file):
        pairs = tmp_path / "pairs.tsv"
        pairs.write_text("the cat\tthe mat\n", encoding="utf-8")
        trees = tmp_path / "trees.conllu"
        trees.write_text(
            "# sent_id = s0\n"
            + conllu_token_line(1, "the", 2) + "\n"
            + conllu_token_line(2, "cat", 0) + "\n\n"
            "# sent_id = r0\n"
            + conllu_token_line(1, "the", 2) + "\n"
            + conllu_token_line(2, "mat", 0) + "\n",
            encoding="utf-8",
        )
        index = tmp_path / "index.json"
        index.write_text(
            json.dumps(
                [
                    {"doc_id": "pairs", "sent_index": 0, "role": "source", "sent_id": "s0"},
                    {"doc_id": "pairs", "sent_index": 0, "role": "ref-0", "sent_id": "r0"},
                ]
            ),
            encoding="utf-8",
        )
        out = tmp_path / "tagged"
        code = main(
            [
                "annotate-ct",
                "--corpus", str(pairs),
                "--trees", str(trees),
                "--tree-index", str(index),
                "--freq-table", str(freq_table_file),
                "--stage", "2",
                "--out", str(out),
            ]
        )
        assert code == 0
        line = (tmp_path / "tagged.tsv").read_text().strip()
        assert line.startswith("<DEPENDENCYTREEDEPTH_1.00> <WORDRANK_")
        assert line.endswith("\tthe mat")
        manifest = json.loads((tmp_path / "tagged-manifest.json").read_text())
        assert manifest["stage"] == "stage2"

    def test_missing_tree_exit_2(self, tmp_path, freq_table_file, capsys):
        pairs = tmp_path / "pairs.tsv"
        pairs.write_text("the cat\tthe mat\n", encoding="utf-8")
        trees = tmp_path / "trees.conllu"
        trees.write_text(conllu_token_line(1, "x", 0) + "\n", encoding="utf-8")
        index = tmp_path / "index.json"
        index.write_text("[]", encoding="utf-8")
        code = main(
            [
                "--json-errors",
                "annotate-ct",
                "--corpus", str(pairs),
                "--trees", str(trees),
                "--tree-index", str(index),
                "--freq-table", str(freq_table_file),
                "--stage", "1",
                "--out", str(tmp_path / "out"),
            ]
        )
        assert code == 2
        error = json.loads(capsys.readouterr().err)
        assert error["error"] == "DataError"


class TestEvaluateCommand:
    def test_identity_fixture_scores_100(self, tmp_path, capsys):
        pairs = tmp_path / "pairs.tsv"
        pairs.write_text(
            "the cat sat on the mat\tthe cat sat on the mat\n"
            "a dog barks at night\ta dog barks at night\n",
            encoding="utf-8",
        )
        outputs = tmp_path / "outputs.txt"
        outputs.write_text("the cat sat on the mat\na dog barks at night\n", encoding="utf-8")
        report_path = tmp_path / "report.json"
        code = main(
            [
                "evaluate",
                "--pairs", str(pairs),
                "--outputs", str(outputs),
                "--report", str(report_path),
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "100.00" in out
        report = json.loads(report_path.read_text())
        assert report["sari"] == 100.0
        assert report["bleu"] == 100.0
        assert report["rouge1"] == report["rouge2"] == report["rougeL"] == 100.0

    def test_length_mismatch_exit_2(self, pairs_tsv, tmp_path, capsys):
        outputs = tmp_path / "outputs.txt"
        outputs.write_text("only one line\n", encoding="utf-8")
        code = main(["evaluate", "--pairs", str(pairs_tsv), "--outputs", str(outputs)])
        assert code == 2


class TestSearchCommand:
    def test_grid_with_truncate_mock_matches_per_candidate_oracle(self, pairs_tsv, tmp_path):
        out_dir = tmp_path / "run"
        code = main(
            [
                "search",
                "--validation", str(pairs_tsv),
                "--strategy", "grid",
                "--dtd-values", "0.8",
                "--wr-values", "0.7",
                "--lv-values", "0.6",
                "--lr-values", "0.4,0.8,1.0",
                "--mock", "truncate_to_lr",
                "--out-dir", str(out_dir),
            ]
        )
        assert code == 0
        best = json.loads((out_dir / "best.json").read_text())
        sources_refs = [
            ("the cat sat on the mat", ["the cat sat", "a cat sat down"]),
            ("a dog barks at night", ["dogs bark at night", "the dog barks"]),
        ]
        oracle = {
            lr: sum(
                sari(src, src[: int(lr * len(src))], refs) for src, refs in sources_refs
            ) / len(sources_refs)
            for lr in (0.4, 0.8, 1.0)
        }
        assert best["lr"] == max(oracle, key=oracle.get)
        assert best["score"] == pytest.approx(max(oracle.values()))
        log_lines = (out_dir / "search-log.jsonl").read_text().splitlines()
        assert len(log_lines) == 3

    def test_es_strategy_runs(self, pairs_tsv, tmp_path):
        code = main(
            [
                "search",
                "--validation", str(pairs_tsv),
                "--strategy", "es",
                "--dtd-values", "0.8,0.9",
                "--wr-values", "0.7",
                "--lv-values", "0.6",
                "--lr-values", "0.4,0.8,1.0",
                "--mock", "truncate_to_lr",
                "--budget", "10",
                "--seed", "1",
                "--out-dir", str(tmp_path / "run-es"),
            ]
        )
        assert code == 0

    def test_predicted_lr_strategy(self, pairs_tsv, tmp_path, freq_table_file):
        train = tmp_path / "lr-train.tsv"
        rows = [
            "\t".join(("the cat sat " * (i + 2)).strip().rsplit(" ", i + 1))
            for i in range(8)
        ]
        train.write_text("\n".join(rows) + "\n", encoding="utf-8")
        model_path = tmp_path / "model.json"
        assert main(
            [
                "fit-lr",
                "--pairs", str(train),
                "--freq-table", str(freq_table_file),
                "--ridge-lambda", "1.0",
                "--out", str(model_path),
            ]
        ) == 0
        out_dir = tmp_path / "run-pred"
        code = main(
            [
                "search",
                "--validation", str(pairs_tsv),
                "--strategy", "grid",
                "--dtd-values", "0.8,0.9",
                "--wr-values", "0.7",
                "--lv-values", "0.6",
                "--lr-predictor", str(model_path),
                "--freq-table", str(freq_table_file),
                "--mock", "truncate_to_lr",
                "--out-dir", str(out_dir),
            ]
        )
        assert code == 0
        best = json.loads((out_dir / "best.json").read_text())
        assert best["lr"] is None  # flexible LR comes from the predictor per sentence

    def test_off_grid_values_rejected(self, pairs_tsv, tmp_path, capsys):
        code = main(
            [
                "search",
                "--validation", str(pairs_tsv),
                "--dtd-values", "0.83",
                "--wr-values", "0.7",
                "--lv-values", "0.6",
                "--lr-values", "1.0",
                "--mock", "identity",
                "--out-dir", str(tmp_path / "x"),
            ]
        )
        assert code == 1
        assert "not on the bucket grid" in capsys.readouterr().err


class TestLrCommands:
    def test_fit_and_predict(self, tmp_path, freq_table_file, capsys):
        pairs = tmp_path / "train.tsv"
        rows = []
        for i in range(8):
            source = "word " * (i + 4)
            ref = "word " * (i + 2)
            rows.append(f"{source.strip()}\t{ref.strip()}")
        pairs.write_text("\n".join(rows) + "\n", encoding="utf-8")
        model_path = tmp_path / "model.json"
        assert main(
            [
                "fit-lr",
                "--pairs", str(pairs),
                "--freq-table", str(freq_table_file),
                "--ridge-lambda", "0.5",
                "--out", str(model_path),
            ]
        ) == 0
        capsys.readouterr()
        sources = tmp_path / "sources.txt"
        sources.write_text("word word word word word\n", encoding="utf-8")
        assert main(
            [
                "predict-lr",
                "--model", str(model_path),
                "--sources", str(sources),
                "--freq-table", str(freq_table_file),
            ]
        ) == 0
        line = capsys.readouterr().out.strip()
        value = float(line)
        assert 0.2 <= value <= 1.5
        assert round(value / 0.05) * 0.05 == pytest.approx(value)


def items_fixture(tmp_path, n=4):
    records = [
        {
            "doc_id": "doc",
            "sent_index": i,
            "source": f"source {i}",
            "outputs": {"model-alpha": f"alpha {i}", "model-beta": f"beta {i}"},
        }
        for i in range(n)
    ]
    path = tmp_path / "items.json"
    path.write_text(json.dumps(records), encoding="utf-8")
    return path


class TestAssignCommand:
    def test_writes_plan_with_payloads(self, tmp_path):
        items = items_fixture(tmp_path)
        plan_path = tmp_path / "plan.json"
        code = main(
            [
                "assign",
                "--items", str(items),
                "--annotators", "a0,a1",
                "--load", "4",
                "--seed", "7",
                "--systems", "model-alpha,model-beta",
                "--out", str(plan_path),
            ]
        )
        assert code == 0
        stored = json.loads(plan_path.read_text())
        assert set(stored["plan"]["tasks"]) == {"a0", "a1"}
        assert stored["items"]["doc:0"]["outputs"]["model-alpha"] == "alpha 0"

    def test_infeasible_exit_1(self, tmp_path, capsys):
        items = items_fixture(tmp_path, n=5)
        code = main(
            [
                "assign",
                "--items", str(items),
                "--annotators", "a0,a1",
                "--load", "4",
                "--systems", "model-alpha,model-beta",
                "--out", str(tmp_path / "plan.json"),
            ]
        )
        assert code == 1


class TestAgreementCommand:
    def _ratings_file(self, tmp_path):
        ratings = []
        values = {
            ("a0", 0): (4, 2), ("a0", 1): (3, 3), ("a0", 2): (2, 4), ("a0", 3): (5, 1),
            ("a1", 0): (4, 3), ("a1", 1): (2, 3), ("a1", 2): (2, 4), ("a1", 3): (4, 2),
        }
        for (annotator, idx), (va, vb) in values.items():
            for criterion in agr.CRITERIA:
                ratings.append(agr.Rating(annotator, ("doc", idx), "sysA", criterion, va))
                ratings.append(agr.Rating(annotator, ("doc", idx), "sysB", criterion, vb))
        table = agr.RatingTable(ratings)
        path = tmp_path / "ratings.csv"
        agr.write_ratings_csv(table, path)
        return path, table

    def test_json_output_matches_module_computation(self, tmp_path, capsys):
        path, table = self._ratings_file(tmp_path)
        json_out = tmp_path / "agreement.json"
        code = main(["agreement", "--ratings", str(path), "--json-out", str(json_out)])
        assert code == 0
        printed = capsys.readouterr().out
        assert "Likert means" in printed
        assert "Cohen's kappa" in printed
        assert "Krippendorff's alpha" in printed
        results = json.loads(json_out.read_text())
        means = agr.likert_means(table)
        assert results["likert_means"]["sysA|simplicity"] == pytest.approx(
            round(means[("sysA", "simplicity")], 3)
        )
        oa = agr.to_outcomes(table, "a0", "simplicity", "sysA", "sysB").by_item()
        ob = agr.to_outcomes(table, "a1", "simplicity", "sysA", "sysB").by_item()
        common = sorted(set(oa) & set(ob))
        expected_kappa = agr.cohen_kappa([oa[i] for i in common], [ob[i] for i in common])
        assert results["cohen_kappa"]["a0 & a1"]["simplicity"] == pytest.approx(expected_kappa)
        expected_alpha = agr.krippendorff_alpha(
            table.filtered(annotators=("a0", "a1"), system="sysA"), "simplicity", system="sysA"
        )
        assert results["krippendorff_alpha"]["a0 & a1|sysA"]["simplicity"] == pytest.approx(
            expected_alpha
        )

    def test_four_annotator_fixture_table_shape(self, tmp_path, capsys):
        # cycle-overlap fixture: each annotator overlaps exactly two others,
        # so two of the six pairs have no kappa row and no alpha rows
        fixture = Path(__file__).parent / "data" / "ratings_4annotators.csv"
        json_out = tmp_path / "agreement.json"
        assert main(["agreement", "--ratings", str(fixture), "--json-out", str(json_out)]) == 0
        capsys.readouterr()
        results = json.loads(json_out.read_text())
        assert len(results["cohen_kappa"]) == 4
        assert set(results["likert_means"]) == {
            f"{system}|{criterion}"
            for system in ("sysA", "sysB")
            for criterion in agr.CRITERIA
        }
        alpha_pairs = {key.split("|")[0] for key in results["krippendorff_alpha"]}
        assert alpha_pairs == set(results["cohen_kappa"])
        table = agr.load_ratings(fixture)
        pair = sorted(results["cohen_kappa"])[0]
        a, b = pair.split(" & ")
        oa = agr.to_outcomes(table, a, "simplicity", "sysA", "sysB").by_item()
        ob = agr.to_outcomes(table, b, "simplicity", "sysA", "sysB").by_item()
        common = sorted(set(oa) & set(ob))
        expected = agr.cohen_kappa([oa[i] for i in common], [ob[i] for i in common])
        assert results["cohen_kappa"][pair]["simplicity"] == pytest.approx(expected)

    def test_more_than_two_systems_needs_flag(self, tmp_path, capsys):
        ratings = [
            agr.Rating("a0", ("d", 0), system, "simplicity", 3)
            for system in ("s1", "s2", "s3")
        ]
        path = tmp_path / "ratings.csv"
        agr.write_ratings_csv(agr.RatingTable(ratings), path)
        assert main(["agreement", "--ratings", str(path)]) == 1
        assert "exactly two" in capsys.readouterr().err


class TestCompactCommand:
    def test_compacts(self, tmp_path, capsys):
        record = {
            "annotator": "a0", "doc_id": "d", "sent_index": 0,
            "system": "s", "criterion": "simplicity", "value": 3,
        }
        (tmp_path / "ratings.jsonl").write_text(
            json.dumps(record) + "\n" + json.dumps(record) + "\n", encoding="utf-8"
        )
        assert main(["compact-ratings", "--data-dir", str(tmp_path)]) == 0
        assert "kept 1, dropped 1" in capsys.readouterr().out


class TestErrorReporting:
    def test_unknown_command_exit_1(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_bridge_error_exit_3(self, pairs_tsv, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text(
            json.dumps(
                {"bridge": {"mode": "subprocess", "command": ["/nonexistent-simplifier"]}}
            ),
            encoding="utf-8",
        )
        code = main(
            [
                "--config", str(config),
                "search",
                "--validation", str(pairs_tsv),
                "--dtd-values", "0.8",
                "--wr-values", "0.7",
                "--lv-values", "0.6",
                "--lr-values", "1.0",
                "--out-dir", str(tmp_path / "x"),
            ]
        )
        assert code == 3

    def test_json_errors_shape(self, capsys):
        assert main(["--json-errors", "split", "--corpus", "/missing.json", "--out-dir", "/tmp/x"]) in (1, 2)
        error = json.loads(capsys.readouterr().err)
        assert set(error) == {"error", "message"}

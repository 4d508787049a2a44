"""Metric definitions vs the naive reference, plus report plumbing."""

import json
import math

import pytest

from riskrank.index import ranked_list_from_scores
from riskrank.metrics import (
    evaluate_run,
    hit_rate_at_k,
    load_qrels,
    map_at_k,
    mrr_at_k,
    ndcg_at_k,
    save_qrels,
)

from reference import naive_ap, naive_hit_rate, naive_mrr, naive_ndcg


def run_of(query_id, ids):
    """RankedList whose item order is exactly ``ids``."""
    return ranked_list_from_scores(
        query_id, [(item, float(len(ids) - i)) for i, item in enumerate(ids)]
    )


class TestMRR:
    def test_first_rank(self):
        s = mrr_at_k([run_of("q", ["rel", "x"])], {"q": {"rel"}}, 10)
        assert s.per_query["q"] == 1.0

    def test_rank_three(self):
        s = mrr_at_k([run_of("q", ["a", "b", "rel", "c"])], {"q": {"rel"}}, 10)
        assert s.per_query["q"] == pytest.approx(1 / 3, abs=1e-12)

    def test_absent_from_top_k(self):
        ids = [f"x{i}" for i in range(10)] + ["rel"]
        s = mrr_at_k([run_of("q", ids)], {"q": {"rel"}}, 10)
        assert s.per_query["q"] == 0.0

    def test_missing_query_in_qrels(self):
        with pytest.raises(ValueError, match="missing from qrels"):
            mrr_at_k([run_of("q", ["a"])], {}, 10)


class TestMAP:
    def test_single_relevant_at_rank_four(self):
        s = map_at_k([run_of("q", ["a", "b", "c", "rel"])], {"q": {"rel"}}, 100)
        assert s.per_query["q"] == 0.25

    def test_two_relevant(self):
        s = map_at_k([run_of("q", ["a", "b", "c", "d"])], {"q": {"a", "c"}}, 100)
        assert s.per_query["q"] == pytest.approx((1.0 + 2 / 3) / 2, abs=1e-12)

    def test_none_retrieved(self):
        s = map_at_k([run_of("q", ["a", "b"])], {"q": {"zzz"}}, 100)
        assert s.per_query["q"] == 0.0

    def test_k_truncates_denominator(self):
        # three relevant but k=2: denominator is min(3, 2) = 2
        s = map_at_k([run_of("q", ["r1", "r2", "r3"])], {"q": {"r1", "r2", "r3"}}, 2)
        assert s.per_query["q"] == 1.0


class TestNDCG:
    def test_rank_one(self):
        s = ndcg_at_k([run_of("q", ["rel", "b"])], {"q": {"rel"}}, 10)
        assert s.per_query["q"] == 1.0

    def test_rank_two(self):
        s = ndcg_at_k([run_of("q", ["a", "rel"])], {"q": {"rel"}}, 10)
        assert s.per_query["q"] == pytest.approx(0.6309297535714575, abs=1e-12)

    def test_absent(self):
        s = ndcg_at_k([run_of("q", ["a", "b"])], {"q": {"zzz"}}, 10)
        assert s.per_query["q"] == 0.0


class TestHitRate:
    def test_boundary_inclusion(self):
        s = hit_rate_at_k([run_of("q", ["a", "b", "c", "d", "rel"])], {"q": {"rel"}}, 5)
        assert s.per_query["q"] == 1.0

    def test_boundary_exclusion(self):
        s = hit_rate_at_k(
            [run_of("q", ["a", "b", "c", "d", "e", "rel"])], {"q": {"rel"}}, 5
        )
        assert s.per_query["q"] == 0.0

    def test_aggregate_is_mean(self):
        run = [
            run_of("q1", ["rel1"]),
            run_of("q2", ["x"]),
            run_of("q3", ["rel3"]),
        ]
        qrels = {"q1": {"rel1"}, "q2": {"rel2"}, "q3": {"rel3"}}
        s = hit_rate_at_k(run, qrels, 5)
        assert s.aggregate == pytest.approx(2 / 3, abs=1e-12)


def random_instance(rng):
    n_items = int(rng.integers(1, 200))
    universe = [f"item{i:03d}" for i in range(n_items)]
    order = list(rng.permutation(universe))
    n_rel = int(rng.integers(1, 6))
    pool = list(universe) + [f"missing{i}" for i in range(3)]
    relevant = set(
        rng.choice(pool, size=min(n_rel, len(pool)), replace=False).tolist()
    )
    return order, relevant


class TestAgainstNaiveReference:
    def test_random_instances_match(self, rng):
        for _ in range(300):
            order, relevant = random_instance(rng)
            run = [run_of("q", order)]
            qrels = {"q": relevant}
            for k in (1, 5, 10, 100):
                assert mrr_at_k(run, qrels, k).per_query["q"] == pytest.approx(
                    naive_mrr(order, relevant, k), abs=1e-12
                )
                assert map_at_k(run, qrels, k).per_query["q"] == pytest.approx(
                    naive_ap(order, relevant, k), abs=1e-12
                )
                assert ndcg_at_k(run, qrels, k).per_query["q"] == pytest.approx(
                    naive_ndcg(order, relevant, k), abs=1e-12
                )
                assert hit_rate_at_k(run, qrels, k).per_query["q"] == pytest.approx(
                    naive_hit_rate(order, relevant, k), abs=1e-12
                )


class TestInvariants:
    def test_single_relevant_mrr_equals_map(self, rng):
        for _ in range(100):
            order, _ = random_instance(rng)
            relevant = {order[int(rng.integers(0, len(order)))]}
            run = [run_of("q", order)]
            qrels = {"q": relevant}
            for k in (5, 10, 100):
                assert (
                    mrr_at_k(run, qrels, k).per_query["q"]
                    == map_at_k(run, qrels, k).per_query["q"]
                )

    def test_single_relevant_orderings(self, rng):
        for _ in range(100):
            order, _ = random_instance(rng)
            relevant = {order[int(rng.integers(0, len(order)))]}
            run = [run_of("q", order)]
            qrels = {"q": relevant}
            k = 10
            mrr = mrr_at_k(run, qrels, k).per_query["q"]
            ndcg = ndcg_at_k(run, qrels, k).per_query["q"]
            hr = hit_rate_at_k(run, qrels, k).per_query["q"]
            assert hr >= mrr >= 0.0
            assert ndcg >= mrr  # 1/log2(r+1) >= 1/r for r >= 1

    def test_perfect_ranking_scores_one_everywhere(self):
        run = [run_of(f"q{i}", [f"rel{i}", "x", "y"]) for i in range(5)]
        qrels = {f"q{i}": {f"rel{i}"} for i in range(5)}
        report = evaluate_run(run, qrels, k_list=(5, 10, 100))
        assert all(v == 1.0 for v in report.aggregate.values())

    def test_rank_based_only(self, rng):
        """Any positive monotone transform of the scores changes nothing."""
        for _ in range(50):
            order, relevant = random_instance(rng)
            scores = sorted(rng.uniform(0.1, 5.0, size=len(order)), reverse=True)
            raw = ranked_list_from_scores("q", list(zip(order, scores)))
            transformed = ranked_list_from_scores(
                "q", [(i, math.exp(3.0 * s) + 7.0) for i, s in zip(order, scores)]
            )
            qrels = {"q": relevant}
            a = evaluate_run([raw], qrels, (10,)).aggregate
            b = evaluate_run([transformed], qrels, (10,)).aggregate
            assert a == b

    def test_empty_ranked_list_scores_zero(self):
        run = [run_of("q", [])]
        report = evaluate_run(run, {"q": {"rel"}}, (5, 10))
        assert all(v == 0.0 for v in report.aggregate.values())

    def test_values_in_unit_interval_and_mean(self, rng):
        run = []
        qrels = {}
        for i in range(30):
            order, relevant = random_instance(rng)
            run.append(run_of(f"q{i}", order))
            qrels[f"q{i}"] = relevant
        report = evaluate_run(run, qrels, (5, 10, 100))
        for name, value in report.aggregate.items():
            assert 0.0 <= value <= 1.0
            mean = math.fsum(report.per_query[q][name] for q in report.per_query) / 30
            assert value == pytest.approx(mean, abs=1e-12)


class TestReportPlumbing:
    def test_evaluate_run_metric_names(self):
        report = evaluate_run([run_of("q", ["a"])], {"q": {"a"}}, (5, 10, 100))
        assert "MRR@10" in report.aggregate
        assert "MAP@100" in report.aggregate
        assert "NDCG@10" in report.aggregate
        assert "HR@5" in report.aggregate
        assert report.query_count == 1

    def test_k_list_validation(self):
        with pytest.raises(ValueError):
            evaluate_run([], {}, ())
        with pytest.raises(ValueError):
            evaluate_run([], {}, (0,))

    def test_to_dict_has_display_column(self):
        report = evaluate_run([run_of("q", ["a", "b"])], {"q": {"b"}}, (10,))
        payload = report.to_dict()
        assert payload["aggregate_display"]["MRR@10"] == "0.5000"
        assert payload["aggregate"]["MRR@10"] == 0.5

    def test_json_bytes_deterministic(self):
        report = evaluate_run([run_of("q", ["a", "b"])], {"q": {"b"}}, (10,))
        assert report.to_json_bytes() == report.to_json_bytes()

    def test_write_csv(self, tmp_path):
        report = evaluate_run([run_of("q", ["a"])], {"q": {"a"}}, (5,))
        report.write_csv(tmp_path / "metrics.csv")
        lines = (tmp_path / "metrics.csv").read_text().splitlines()
        assert lines[0] == "metric,value"
        assert any(line.startswith("MRR@5,") for line in lines)

    def test_qrels_round_trip(self, tmp_path):
        qrels = {"q1": {"a", "b"}, "q2": {"c"}}
        save_qrels(qrels, tmp_path / "qrels.jsonl")
        assert load_qrels(tmp_path / "qrels.jsonl") == qrels

    def test_qrels_reject_empty_relevant(self, tmp_path):
        (tmp_path / "qrels.jsonl").write_text(
            json.dumps({"query_id": "q", "relevant": []}) + "\n"
        )
        with pytest.raises(ValueError, match="no relevant"):
            load_qrels(tmp_path / "qrels.jsonl")

    def test_qrels_reject_duplicates(self, tmp_path):
        lines = [
            json.dumps({"query_id": "q", "relevant": ["a"]}),
            json.dumps({"query_id": "q", "relevant": ["b"]}),
        ]
        (tmp_path / "qrels.jsonl").write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="duplicate"):
            load_qrels(tmp_path / "qrels.jsonl")

    def test_offline_evaluation_from_run_and_qrels_files(self, tmp_path):
        """A persisted run plus persisted qrels can be scored later."""
        from riskrank.index import load_run, save_run

        run = [
            run_of("q1", ["rel1", "x", "y"]),
            run_of("q2", ["x", "rel2"]),
        ]
        qrels = {"q1": {"rel1"}, "q2": {"rel2"}}
        save_run(tmp_path / "run.jsonl", run)
        save_qrels(qrels, tmp_path / "qrels.jsonl")
        report = evaluate_run(
            load_run(tmp_path / "run.jsonl"),
            load_qrels(tmp_path / "qrels.jsonl"),
            (5, 10),
        )
        assert report.aggregate["MRR@5"] == pytest.approx(0.75, abs=1e-12)

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SLOW_INSERT
from knobrag.corpus import DebugQuestion, load_corpus
from knobrag.embed import HashingEmbedder
from knobrag.errors import EmptyGold, EmptyInput, UnmatchedVerdict
from knobrag.evalharness import (
    EvalRecord,
    SuccessVerdict,
    aggregate,
    doc_retrieval_recall,
    load_verdicts,
    precision_recall_f1,
    record_runnable,
    run_nl_eval,
    success_rate,
)
from knobrag.knobspace import load_registry
from knobrag.reasoner import MockBackend, ReasonerConfig, ScriptedBackend, build_document_index, diagnose
from knobrag.synthbench import constant_responder, two_phase_responder
from knobrag.telemetry import load_catalog

knob_sets = st.frozensets(st.sampled_from("abcdefgh"), max_size=8)


def _prf_oracle(pred, gold):
    tp = sum(1 for x in pred if x in gold)
    p = 0.0 if not pred else tp / len(pred)
    r = tp / len(gold)
    return p, r, (0.0 if tp == 0 else 2 * tp / (len(pred) + len(gold)))


class TestPrecisionRecallF1:
    def test_perfect(self):
        assert precision_recall_f1({"a", "b"}, {"a", "b"}) == (1.0, 1.0, 1.0)

    def test_disjoint(self):
        assert precision_recall_f1({"x"}, {"a", "b"}) == (0.0, 0.0, 0.0)

    def test_half(self):
        assert precision_recall_f1({"a", "b"}, {"a", "c"}) == (0.5, 0.5, 0.5)

    def test_empty_prediction(self):
        assert precision_recall_f1(set(), {"a"}) == (0.0, 0.0, 0.0)

    def test_empty_gold(self):
        with pytest.raises(EmptyGold):
            precision_recall_f1({"a"}, set())

    @given(knob_sets, knob_sets.filter(bool))
    def test_properties(self, pred, gold):
        p, r, f1 = precision_recall_f1(pred, gold)
        assert (p, r) == pytest.approx(_prf_oracle(pred, gold)[:2])
        assert f1 == pytest.approx(_prf_oracle(pred, gold)[2])
        assert 0 <= f1 <= 1 and f1 <= min(2 * p, 2 * r) + 1e-12
        assert (f1 == 1.0) == (pred == gold)


class TestDocRetrievalRecall:
    def test_half(self):
        assert doc_retrieval_recall([{"a"}, {"a", "x"}], {"a", "b"}, 2) == 0.5

    def test_k_zero(self):
        assert doc_retrieval_recall([{"a"}], {"a"}, 0) == 0.0

    def test_covered(self):
        assert doc_retrieval_recall([{"a", "b", "z"}], {"a", "b"}, 1) == 1.0

    def test_document_objects(self):
        docs = load_corpus(SLOW_INSERT / "corpus.jsonl")
        gold = set().union(*(d.knobs for d in docs))
        assert doc_retrieval_recall(docs, gold, len(docs)) == 1.0

    def test_k_past_end(self):
        assert doc_retrieval_recall([{"a"}], {"a", "b"}, 10) == 0.5

    def test_errors(self):
        with pytest.raises(EmptyGold):
            doc_retrieval_recall([{"a"}], set(), 1)
        with pytest.raises(ValueError):
            doc_retrieval_recall([{"a"}], {"a"}, -1)

    @given(st.lists(knob_sets, max_size=12), knob_sets.filter(bool))
    def test_monotone_and_brute_force(self, ranked, gold):
        prev = 0.0
        for k in range(len(ranked) + 2):
            got = doc_retrieval_recall(ranked, gold, k)
            covered = {g for g in gold if any(g in labels for labels in ranked[:k])}
            assert got == pytest.approx(len(covered) / len(gold))
            assert got >= prev
            prev = got


class TestSuccessRate:
    def test_examples(self):
        assert success_rate([SuccessVerdict("a", True), SuccessVerdict("b", False)]) == 0.5
        assert success_rate([SuccessVerdict(str(i), True) for i in range(4)]) == 1.0
        assert success_rate([SuccessVerdict(str(i), i < 79) for i in range(100)]) == pytest.approx(0.79)

    def test_empty(self):
        with pytest.raises(EmptyInput):
            success_rate([])


class TestAggregate:
    def test_hand_computed(self):
        r1 = EvalRecord("q1", frozenset({"a", "b"}), frozenset({"a", "c"}),
                        latencies_ms={"retrieval": 2.0, "total": 10.0}, retrieval_recall={1: 0.5, 3: 1.0},
                        recommended=2)
        r2 = EvalRecord("q2", frozenset({"a"}), frozenset({"a"}), latencies_ms={"retrieval": 4.0, "total": 20.0},
                        retrieval_recall={1: 1.0, 3: 1.0})
        rep = aggregate([r1, r2])
        assert (rep.precision, rep.recall, rep.f1) == (0.75, 0.75, 0.75)
        assert rep.recall_at_k == {1: 0.75, 3: 1.0}
        assert rep.latencies_ms == {"retrieval": 3.0, "telemetry": 0.0, "reasoning": 0.0, "total": 15.0}
        assert rep.n == 2 and rep.failures == 0 and rep.mean_recommended == 1.0

    def test_failures_score_zero(self):
        recs = [EvalRecord("q", frozenset(), frozenset({"a"}), failure=True),
                EvalRecord("r", frozenset({"a"}), frozenset({"a"}))]
        rep = aggregate(recs)
        assert rep.failures == 1 and rep.f1 == 0.5

    def test_failure_invariant(self):
        with pytest.raises(ValueError):
            EvalRecord("q", frozenset({"a"}), frozenset({"a"}), failure=True)

    def test_empty(self):
        with pytest.raises(EmptyInput):
            aggregate([])

    @settings(max_examples=50)
    @given(st.lists(st.tuples(knob_sets, knob_sets.filter(bool)), min_size=1, max_size=10), st.randoms())
    def test_order_invariant(self, pairs, rnd):
        recs = [EvalRecord(str(i), frozenset(p), frozenset(g)) for i, (p, g) in enumerate(pairs)]
        a = aggregate(recs)
        rnd.shuffle(recs)
        b = aggregate(recs)
        assert (a.precision, a.recall, a.f1) == pytest.approx((b.precision, b.recall, b.f1), abs=1e-12)
        assert all(0 <= v <= 1 for v in (a.precision, a.recall, a.f1))

    def test_lines(self):
        rep = aggregate([EvalRecord("q", frozenset({"a"}), frozenset({"a"}), retrieval_recall={5: 1.0})])
        lines = rep.lines()
        assert lines[0] == "questions 1  failures 0"
        assert lines[1] == "precision 1.0000  recall 1.0000  f1 1.0000"
        assert lines[2] == "doc recall @5 1.0000"
        assert lines[3].startswith("latency ms retrieval 0.0")
        json.dumps(rep.to_record())


@pytest.fixture(scope="module")
def slow_insert_setup():
    registry = load_registry(SLOW_INSERT.parent / "mysql57.registry", "mysql57")
    docs = load_corpus(SLOW_INSERT / "corpus.jsonl", registry)
    emb = HashingEmbedder()
    cfg = ReasonerConfig(registry, {d.id: d for d in docs}, MockBackend.from_file(SLOW_INSERT / "transcript.jsonl"), emb,
                         load_catalog(SLOW_INSERT / "catalog.txt", registry), period=24)
    return build_document_index(docs, emb), cfg


def _questions(n=2):
    out = [DebugQuestion("q1", "Import into MySQL is slow.", frozenset({"autocommit", "unique_checks"})),
           DebugQuestion("q2", "Buffer pool misses are high.", frozenset({"innodb_buffer_pool_size"}))]
    out += [DebugQuestion(f"x{i}", f"Issue number {i}.", frozenset({"autocommit"})) for i in range(n - 2)]
    return out


class TestRunNlEval:
    def test_two_questions_hand_values(self, slow_insert_setup):
        from dataclasses import replace
        index, cfg = slow_insert_setup
        backend = ScriptedBackend(two_phase_responder("[autocommit, foreign_key_checks]", "{autocommit: 0}"))
        rep, recs = run_nl_eval(_questions(), index, None, replace(cfg, backend=backend))
        # q1: P=1/2 R=1/2 F1=1/2; q2: all zero
        assert (rep.precision, rep.recall, rep.f1) == (0.25, 0.25, 0.25)
        assert [r.question_id for r in recs] == ["q1", "q2"]
        assert set(rep.recall_at_k) == {1, 3, 5, 10}
        for r in recs:
            vals = [r.retrieval_recall[k] for k in (1, 3, 5, 10)]
            assert vals == sorted(vals)

    def test_recall_matches_labels(self, slow_insert_setup):
        from dataclasses import replace
        from knobrag.evalharness import ranked_labels
        index, cfg = slow_insert_setup
        q = _questions()[0]
        cfg = replace(cfg, backend=ScriptedBackend(constant_responder("[]")))
        labels = ranked_labels(q, index, None, cfg, 10)
        _, recs = run_nl_eval([q], index, None, cfg)
        assert recs[0].retrieval_recall == {k: doc_retrieval_recall(labels, q.gold_knobs, k) for k in (1, 3, 5, 10)}

    def test_empty(self, slow_insert_setup):
        index, cfg = slow_insert_setup
        with pytest.raises(EmptyInput):
            run_nl_eval([], index, None, cfg)

    def test_all_prose(self, slow_insert_setup):
        from dataclasses import replace
        index, cfg = slow_insert_setup
        rep, recs = run_nl_eval(_questions(6), index, None,
                                replace(cfg, backend=ScriptedBackend(constant_responder("Try tuning things."))))
        assert rep.f1 == 0.0 and rep.failures == 6 and all(r.failure for r in recs)

    def test_missing_transcript_is_failure_record(self, slow_insert_setup):
        from dataclasses import replace
        index, cfg = slow_insert_setup
        rep, recs = run_nl_eval(_questions(), index, None, replace(cfg, backend=MockBackend()))
        assert rep.failures == 2 and recs[0].error.startswith("MissingTranscript")

    def test_deterministic_and_parallel(self, slow_insert_setup):
        from dataclasses import replace
        index, cfg = slow_insert_setup
        cfg = replace(cfg, backend=ScriptedBackend(two_phase_responder("[autocommit]", "{autocommit: 0}")))
        qs = _questions(8)
        strip = lambda recs: [{k: v for k, v in r.to_record().items() if k != "latencies_ms"} for r in recs]
        a = strip(run_nl_eval(qs, index, None, cfg)[1])
        b = strip(run_nl_eval(qs, index, None, cfg, parallelism=4)[1])
        assert a == b


class TestRunnable:
    def _write(self, path, rows):
        path.write_text("".join(json.dumps(r) + "\n" for r in rows))
        return path

    def _results(self):
        recs = [("a", "1"), ("b", "0"), ("c", "2")]
        return [{"question_id": f"q{i}", "recommendations": dict(recs[:i])} for i in range(1, 4)]

    def test_two_of_three(self, tmp_path):
        path = self._write(tmp_path / "v.jsonl", [{"question_id": "q1", "solved": True, "note": "ok"},
                                                  {"question_id": "q2", "solved": False},
                                                  {"question_id": "q3", "solved": True}])
        rep = record_runnable(path, self._results())
        assert rep.success_rate == pytest.approx(2 / 3) and rep.solved == 2 and rep.n == 3
        assert rep.mean_recommended == 2.0

    def test_unknown_id(self, tmp_path):
        path = self._write(tmp_path / "v.jsonl", [{"question_id": "zz", "solved": True}])
        with pytest.raises(UnmatchedVerdict):
            record_runnable(path, self._results())

    def test_empty_file(self, tmp_path):
        path = tmp_path / "v.jsonl"
        path.write_text("\n")
        with pytest.raises(EmptyInput):
            record_runnable(path, self._results())

    def test_duplicate_verdict(self, tmp_path):
        path = self._write(tmp_path / "v.jsonl", [{"question_id": "q1", "solved": True}] * 2)
        with pytest.raises(ValueError):
            load_verdicts(path)

    def test_bad_record(self, tmp_path):
        path = self._write(tmp_path / "v.jsonl", [{"question_id": "q1"}])
        with pytest.raises(ValueError):
            load_verdicts(path)

    def test_accepts_diagnosis_results(self, tmp_path, slow_insert_setup):
        index, cfg = slow_insert_setup
        q = DebugQuestion("insert-slow", (SLOW_INSERT / "question.txt").read_text().strip(), frozenset({"autocommit"}))
        result = diagnose(q, index, None, SLOW_INSERT / "telemetry", config=cfg)
        path = self._write(tmp_path / "v.jsonl", [{"question_id": "insert-slow", "solved": True}])
        rep = record_runnable(path, [result])
        assert rep.success_rate == 1.0 and rep.mean_recommended == len(result.recommendations)

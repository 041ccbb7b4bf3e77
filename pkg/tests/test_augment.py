import json

import pytest

from knobrag.corpus import DocKind, Document, load_corpus
from knobrag.errors import BackendUnavailable, FormatFailure, NoSnippets
from knobrag.knobspace import KnobRegistry, KnobSpec
from knobrag.reasoner import ScriptedBackend
from knobrag.augment import (
    LogicChain,
    build_chain,
    compose_question,
    derive_behavior,
    derive_functions,
    derive_issue,
    synthesize_dataset,
)
from knobrag.synthbench import constant_responder

PACKET = Document("m-pkt", DocKind.MANUAL,
                  "max_allowed_packet sets an upper limit on the output length of string functions.",
                  frozenset({"max_allowed_packet"}), "manual")


def _router(functions="- f1\n- f2", issue="An issue.", behavior="A behavior.", question="A question?"):
    """Scripted author keyed on each sub-task's format line."""
    def respond(messages):
        text = messages[-1]["content"]
        if "List the distinct functions" in text:
            return functions(text) if callable(functions) else functions
        if "operational problem" in text:
            return issue(text) if callable(issue) else issue
        if "triggers this problem" in text:
            return behavior(text) if callable(behavior) else behavior
        return question(text) if callable(question) else question
    return ScriptedBackend(respond)


class _Capture:
    def __init__(self, inner):
        self.inner, self.calls = inner, []

    def complete(self, request):
        self.calls.append(request)
        return self.inner.complete(request)


def _echo_line(prefix):
    return lambda text: f"{prefix} {text.splitlines()[0]}"


class TestDeriveFunctions:
    def test_packet_example(self):
        fns = derive_functions("max_allowed_packet", [PACKET], _router(
            functions="- set an upper limit on the output length\n- cap the size of one network packet"))
        assert any("upper limit on the output length" in f for f in fns)

    def test_snippets_inlined(self):
        rec = _Capture(_router())
        derive_functions(KnobSpec("max_allowed_packet", "integer", 1024, 1 << 30), [PACKET], rec)
        assert len(rec.calls) == 1
        assert PACKET.text in rec.calls[0].messages[-1]["content"]

    def test_single_bullet(self):
        assert derive_functions("max_allowed_packet", [PACKET], _router(functions="- only one")) == ["only one"]

    def test_no_bullets(self):
        with pytest.raises(FormatFailure):
            derive_functions("max_allowed_packet", [PACKET], _router(functions="It limits packets."))

    def test_no_snippets(self):
        with pytest.raises(NoSnippets):
            derive_functions("autocommit", [PACKET], _router())

    def test_prose_lines_ignored(self):
        got = derive_functions("max_allowed_packet", [PACKET], _router(functions="Here:\n- a\n  - b \n*c"))
        assert got == ["a", "b"]


class TestDeriveIssueBehavior:
    def test_issue_example(self):
        issue = derive_issue("max_allowed_packet", "set an upper limit on the output length",
                             _router(issue="Queries fail to output due to excessive content length."))
        assert "excessive content length" in issue

    def test_single_sentence(self):
        assert derive_issue("k", "f", _router(issue="  One sentence.  ")) == "One sentence."
        assert derive_behavior("k", "i", _router(behavior="One sentence.")) == "One sentence."

    def test_first_paragraph_joined(self):
        assert derive_issue("k", "f", _router(issue="line one\nline two\n\nsecond para")) == "line one line two"

    @pytest.mark.parametrize("fn", [derive_issue, derive_behavior])
    def test_empty_reply(self, fn):
        with pytest.raises(FormatFailure):
            fn("k", "x", _router(issue="  ", behavior="\n\n"))

    @pytest.mark.parametrize("fn", [derive_issue, derive_behavior])
    def test_empty_input(self, fn):
        with pytest.raises(ValueError):
            fn("k", " ", _router())

    def test_behavior_example(self):
        b = derive_behavior("max_allowed_packet", "fails due to excessive content length",
                            _router(behavior="The user executes a repeat command with a huge count."))
        assert "executes a repeat command" in b


class TestCompose:
    def _chain(self):
        return LogicChain("max_allowed_packet", "upper limit on output length",
                          "output fails due to excessive content length", "executes a repeat command")

    def test_packet_question(self):
        reply = ("I executed SQL: REPEAT('A', 26214400) and got NULL with a warning that the result "
                 "was larger than max allowed. What is wrong?")
        doc = compose_question(self._chain(), _router(question=reply))
        assert "REPEAT" in doc.text and "warning" in doc.text
        assert doc.kind is DocKind.SYNTHETIC and doc.knobs == {"max_allowed_packet"}

    def test_chain_records_question(self):
        chain = self._chain()
        compose_question(chain, _router(question="Q?"))
        assert chain.composed_question == "Q?"

    def test_incomplete_chain(self):
        with pytest.raises(ValueError):
            compose_question(LogicChain("k", "f"), _router())

    def test_backend_failure(self):
        def down(messages):
            raise BackendUnavailable("refused")
        chain = self._chain()
        with pytest.raises(FormatFailure):
            compose_question(chain, ScriptedBackend(down))
        assert chain.composed_question is None

    def test_empty_question(self):
        with pytest.raises(FormatFailure):
            compose_question(self._chain(), _router(question=" "))

    def test_build_chain_order(self):
        rec = _Capture(_router(issue=_echo_line("I:"), behavior=_echo_line("B:"), question=_echo_line("Q:")))
        chain, doc = build_chain("k", "fn", rec, "syn-1")
        assert chain.issue.startswith("I: The knob k has this function: fn")
        assert chain.issue in rec.calls[1].messages[-1]["content"]
        assert chain.behavior in rec.calls[2].messages[-1]["content"]
        assert doc.id == "syn-1" and len(rec.calls) == 3


def _registry(*names):
    return KnobRegistry([KnobSpec(n, "boolean") for n in names], "t")


def _manuals(*names):
    return [Document(f"m-{n}", DocKind.MANUAL, f"{n} controls a thing.", frozenset({n}), "s") for n in names]


class TestSynthesize:
    def _backend(self):
        return _router(functions="- first\n- second", issue=_echo_line("I"), behavior=_echo_line("B"),
                       question=lambda t: "Q " + " ".join(t.split()[-6:]))

    def test_two_by_two(self):
        rep = synthesize_dataset(_registry("a", "b"), _manuals("a", "b"), 2, self._backend(), seed=0)
        assert len(rep) == 4 and rep.count("ok") == 4
        assert [d.knobs for d in rep] == [{"a"}, {"a"}, {"b"}, {"b"}]
        by_knob = {}
        for r in rep.records:
            by_knob.setdefault(r.knob, set()).add(r.function_index)
        assert by_knob == {"a": {0, 1}, "b": {0, 1}}

    def test_no_snippets_skipped(self):
        rep = synthesize_dataset(_registry("a", "lonely"), _manuals("a"), 1, self._backend())
        assert [r.status for r in rep.records] == ["ok", "skipped"]
        assert rep.records[1].knob == "lonely" and len(rep) == 1

    def test_per_knob_zero(self):
        assert list(synthesize_dataset(_registry("a"), _manuals("a"), 0, self._backend())) == []

    def test_non_manuals_ignored(self):
        hist = [Document("h", DocKind.HISTORICAL, "a is slow", frozenset({"a"}))]
        rep = synthesize_dataset(_registry("a"), hist, 1, self._backend())
        assert rep.count("skipped") == 1

    def test_failures_counted(self):
        def flaky_question(text):
            return "" if "second" in text or "I The knob b" in text else "Q?"
        backend = _router(functions="- first\n- second", issue=_echo_line("I"), behavior=_echo_line("B"),
                          question=flaky_question)
        rep = synthesize_dataset(_registry("a", "b"), _manuals("a", "b"), 3, backend)
        assert rep.count("ok") + rep.count("failed") == rep.attempted == 6
        assert rep.count("failed") > 0 and len(rep) == rep.count("ok")

    def test_function_failure_fails_every_chain(self):
        rep = synthesize_dataset(_registry("a"), _manuals("a"), 3, _router(functions="none"))
        assert rep.count("failed") == 3 and rep.attempted == 3

    def test_labels_are_chain_knob(self):
        rep = synthesize_dataset(_registry("a", "b", "c"), _manuals("a", "b", "c"), 3, self._backend(), seed=5)
        for doc, rec in zip(rep, [r for r in rep.records if r.status == "ok"]):
            assert doc.knobs == {rec.knob} and doc.kind is DocKind.SYNTHETIC

    def test_seed_shifts_start(self):
        reg, man = _registry(*"abcdefgh"), _manuals(*"abcdefgh")
        idx = {s: [r.function_index for r in synthesize_dataset(reg, man, 1, self._backend(), seed=s).records]
               for s in range(4)}
        assert len({tuple(v) for v in idx.values()}) > 1

    def test_deterministic_bytes(self, tmp_path):
        reg, man = _registry(*"abcd"), _manuals(*"abcd")
        outs = []
        for i, workers in enumerate((1, 4)):
            rep = synthesize_dataset(reg, man, 3, self._backend(), seed=9, workers=workers)
            rep.save(tmp_path / f"c{i}.jsonl", tmp_path / f"r{i}.jsonl")
            outs.append(((tmp_path / f"c{i}.jsonl").read_bytes(), (tmp_path / f"r{i}.jsonl").read_bytes()))
        assert outs[0] == outs[1]

    def test_saved_corpus_loads(self, tmp_path):
        reg = _registry("a", "b")
        rep = synthesize_dataset(reg, _manuals("a", "b"), 2, self._backend())
        rep.save(tmp_path / "syn.jsonl", tmp_path / "rep.jsonl")
        back = load_corpus(tmp_path / "syn.jsonl", reg)
        assert [d.id for d in back] == [d.id for d in rep]
        lines = [json.loads(x) for x in (tmp_path / "rep.jsonl").read_text().splitlines()]
        assert set(lines[0]) == {"knob", "function_index", "status"}

    def test_fanout_caps_functions(self):
        backend = _router(functions="- f0\n- f1\n- f2\n- f3\n- f4", issue=_echo_line("I"),
                          behavior=_echo_line("B"), question=constant_responder("Q?"))
        rep = synthesize_dataset(_registry("a"), _manuals("a"), 8, backend, fanout=2)
        assert {r.function_index for r in rep.records} <= {0, 1}

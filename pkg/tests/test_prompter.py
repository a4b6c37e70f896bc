"""Prompt enhancement: template shape, budget handling, suffix-only drops."""

import pytest

from ragsemcom.errors import BudgetTooSmall
from ragsemcom.knowledge import KnowledgeBase, KnowledgeEntry, Modality
from ragsemcom.prompter import enhance_prompt
from ragsemcom.retriever import RetrievalBundle, ScoredHit, ScoreKind


def kb_with_docs(texts: dict[str, str]) -> KnowledgeBase:
    kb = KnowledgeBase()
    for eid, text in texts.items():
        kb.insert(KnowledgeEntry(
            id=eid, modality=Modality.DOCUMENT, text=text, inserted_at=1.0,
        ))
    return kb


def hits(*ids_scores) -> list[ScoredHit]:
    return [ScoredHit(i, s, ScoreKind.BM25) for i, s in ids_scores]


class TestEnhancePrompt:
    def test_empty_bundle_is_identity(self):
        out = enhance_prompt("a lake", RetrievalBundle(), KnowledgeBase(), 200)
        assert out.text_prompt == "a lake"
        assert not out.truncated
        assert out.reference_image_ids == []

    def test_single_document_template(self):
        kb = kb_with_docs({"d1": "stone bridge with pedestrians"})
        bundle = RetrievalBundle(documents=hits(("d1", 0.9)))
        out = enhance_prompt("a lake", bundle, kb, 200)
        assert out.text_prompt == "a lake Context: stone bridge with pedestrians; "
        assert not out.truncated

    def test_budget_admits_exactly_two_docs(self):
        # 5 docs of 100 chars, budget 250, original 20: separator 10 chars,
        # each doc costs 102, so exactly 2 fit (20+10+204 = 234 <= 250)
        docs = {f"d{i}": "x" * 100 for i in range(5)}
        kb = kb_with_docs(docs)
        bundle = RetrievalBundle(documents=hits(*[(f"d{i}", 1.0 - i / 10) for i in range(5)]))
        out = enhance_prompt("y" * 20, bundle, kb, 250)
        assert out.truncated
        assert out.text_prompt.count("x" * 100) == 2
        assert len(out.text_prompt) <= 250

    def test_inclusion_follows_score_order(self):
        kb = kb_with_docs({"lo": "low text", "hi": "high text", "mid": "mid text"})
        bundle = RetrievalBundle(
            documents=hits(("hi", 0.9), ("mid", 0.5), ("lo", 0.1))
        )
        out = enhance_prompt("cap", bundle, kb, 500)
        assert out.text_prompt.index("high") < out.text_prompt.index("mid")
        assert out.text_prompt.index("mid") < out.text_prompt.index("low")

    def test_drop_is_suffix_only(self):
        kb = kb_with_docs({"a": "short", "b": "z" * 300, "c": "tail"})
        bundle = RetrievalBundle(documents=hits(("a", 0.9), ("b", 0.5), ("c", 0.1)))
        out = enhance_prompt("cap", bundle, kb, 100)
        # b overflows, so b and everything after it is dropped whole
        assert "short" in out.text_prompt
        assert "z" not in out.text_prompt
        assert "tail" not in out.text_prompt
        assert out.truncated

    def test_budget_never_exceeded(self):
        kb = kb_with_docs({f"d{i}": "word " * i for i in range(1, 20)})
        bundle = RetrievalBundle(
            documents=hits(*[(f"d{i}", 1.0 / i) for i in range(1, 20)])
        )
        for budget in (30, 60, 120, 400):
            out = enhance_prompt("caption text", bundle, kb, budget)
            assert len(out.text_prompt) <= budget

    def test_budget_too_small(self):
        with pytest.raises(BudgetTooSmall):
            enhance_prompt("a long caption here", RetrievalBundle(), KnowledgeBase(), 20)

    def test_reference_images_capped(self):
        kb = KnowledgeBase()
        bundle = RetrievalBundle(images=hits(("i1", 0.9), ("i2", 0.8), ("i3", 0.7)))
        out = enhance_prompt("cap", bundle, kb, 100, max_reference_images=2)
        assert out.reference_image_ids == ["i1", "i2"]
        out1 = enhance_prompt("cap", bundle, kb, 100)
        assert out1.reference_image_ids == ["i1"]

    def test_rewriter_failure_keeps_template(self):
        kb = kb_with_docs({"d1": "extra detail"})
        bundle = RetrievalBundle(documents=hits(("d1", 0.9)))

        def broken_rewriter(prompt, docs):
            raise RuntimeError("llm down")

        out = enhance_prompt("cap", bundle, kb, 200, rewriter=broken_rewriter)
        assert out.text_prompt == "cap Context: extra detail; "

    def test_rewriter_output_used_when_in_budget(self):
        kb = kb_with_docs({"d1": "extra detail"})
        bundle = RetrievalBundle(documents=hits(("d1", 0.9)))
        out = enhance_prompt(
            "cap", bundle, kb, 200, rewriter=lambda p, d: "rewritten prompt"
        )
        assert out.text_prompt == "rewritten prompt"

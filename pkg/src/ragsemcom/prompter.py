"""Prompt enhancement: fold reviewed retrieval results into the caption.

Template: original caption, the literal separator " Context: ", then the
retrieved document texts in score order, each terminated by "; ". Documents
that would blow the character budget are dropped whole; inclusion is
suffix-only dropping, never mid-document truncation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import BudgetTooSmall
from .knowledge import KnowledgeBase
from .retriever import RetrievalBundle

SEPARATOR = " Context: "
DOC_TERMINATOR = "; "
MIN_HEADROOM = 16


@dataclass
class PromptBundle:
    text_prompt: str
    reference_image_ids: list[str] = field(default_factory=list)
    char_budget: int = 0
    truncated: bool = False


RewriterFn = Callable[[str, list[str]], str]


def enhance_prompt(
    original: str,
    bundle: RetrievalBundle,
    kb: KnowledgeBase,
    char_budget: int,
    max_reference_images: int = 1,
    rewriter: Optional[RewriterFn] = None,
) -> PromptBundle:
    if char_budget < len(original) + MIN_HEADROOM:
        raise BudgetTooSmall(
            f"budget {char_budget} cannot hold a {len(original)}-char caption"
        )

    doc_texts: list[str] = []
    for hit in bundle.documents:
        entry = kb.maybe_get(hit.entry_id)
        if entry is not None and entry.text:
            doc_texts.append(entry.text)

    prompt = original
    included = 0
    truncated = False
    for text in doc_texts:
        addition = (SEPARATOR if included == 0 else "") + text + DOC_TERMINATOR
        if len(prompt) + len(addition) > char_budget:
            truncated = True
            break
        prompt += addition
        included += 1
    if included < len(doc_texts):
        truncated = True

    reference_ids = [h.entry_id for h in bundle.images[:max_reference_images]]

    if rewriter is not None and doc_texts:
        try:
            rewritten = rewriter(prompt, doc_texts[:included])
            if rewritten and len(rewritten) <= char_budget:
                prompt = rewritten
        except Exception:
            pass  # the template output stands

    return PromptBundle(
        text_prompt=prompt,
        reference_image_ids=reference_ids,
        char_budget=char_budget,
        truncated=truncated,
    )

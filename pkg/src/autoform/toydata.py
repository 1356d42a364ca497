"""Bundled toy corpus for the end-to-end simulated pipeline.

Four (chapter, section) groups of six records each: 24 statement items of
which 16 are proof targets. Each record's content carries its formal form
in a ``\\lean{name : type}`` directive; proof targets carry the closing
term in the proof text. Three records are marked ``\\tricky`` so the
skeleton operator emits an initially broken declaration and the repair
loop is exercised.
"""

from __future__ import annotations

from .corpus import DatasetRecord, LemmaMapEntry, SectionContext

SECTION_TITLES = {
    (1, 1): ("Foundations", "Ground values"),
    (1, 2): ("Foundations", "Derived values"),
    (2, 1): ("Structures", "Carriers"),
    (2, 2): ("Structures", "Morphisms"),
}

TRICKY_ITEMS = {2, 9, 20}


def _content(env: str, label: str, directive: str, tricky: bool) -> str:
    marker = " \\tricky{}" if tricky else ""
    return (
        f"\\begin{{{env}}}[{label}]{marker} The formal form is "
        f"\\lean{{{directive}}}. \\end{{{env}}}"
    )


def _proof(term: str) -> str:
    return f"\\begin{{proof}} Conclude with \\lean{{{term}}}. \\end{{proof}}"


def build_toy_records() -> list[DatasetRecord]:
    records: list[DatasetRecord] = []
    index = 1
    for ch, sec in sorted(SECTION_TITLES):
        chapter_title, section_title = SECTION_TITLES[(ch, sec)]
        ctx = SectionContext(
            chapter_number=ch,
            chapter=chapter_title,
            section_number=str(sec),
            section=section_title,
        )
        prefix = f"c{ch}s{sec}"
        ta, tb = f"T{ch}{sec}A", f"T{ch}{sec}B"
        plan = [
            ("def", "Definition", f"{prefix}Alpha : {ta}", None),
            ("theorem", "Theorem", f"{prefix}AlphaSpec : {ta}", f"{prefix}Alpha"),
            ("abbrev" if sec == 1 else "def", "Definition", f"{prefix}Beta : {tb}", None),
            ("lemma", "Lemma", f"{prefix}BetaSpec : {tb}", f"{prefix}Beta"),
            ("theorem", "Theorem", f"{prefix}Gamma : True", "trivial"),
            ("proposition", "Proposition", f"{prefix}Delta : {ta}", f"{prefix}Alpha"),
        ]
        for k, (env, label_kind, directive, term) in enumerate(plan, start=1):
            label = f"{label_kind} {ch}.{sec}.{k}"
            records.append(
                DatasetRecord(
                    index=index,
                    label=label,
                    env=env,
                    number_components=(ch, sec, k),
                    extracted_labels=(f"{env}:{ch}.{sec}.{k}",),
                    context=ctx,
                    content=_content(env, label, directive, index in TRICKY_ITEMS),
                    dependencies=(),
                    proof=_proof(term) if term is not None else "",
                )
            )
            index += 1
    return records


def build_toy_lemma_map() -> dict[str, LemmaMapEntry]:
    entries = [
        LemmaMapEntry(
            problem_id="2",
            decl_hints=("c1s1Alpha",),
            notes="the ground value closes its own statement",
        ),
        LemmaMapEntry(
            problem_id="5",
            decl_hints=("trivial",),
            notes="a built-in closes trivial goals",
        ),
    ]
    return {e.problem_id: e for e in entries}

"""CoNLL-U parsing and dependency-tree depth.

Only the columns needed for depth computation are retained (id, form,
head, deprel). Multiword-token ranges (``3-4``) and empty nodes (``3.1``)
are skipped. Parsing trees is out of scope: any parser's CoNLL-U output
can be dropped in, and because absolute depths are parser-convention
dependent, only ratios of depths computed under the same parser are
meaningful downstream.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError, IntegrityError, ParseError

_RANGE_ID = re.compile(r"^\d+-\d+$")
_EMPTY_ID = re.compile(r"^\d+\.\d+$")
_SENT_ID = re.compile(r"^#\s*sent_id\s*=\s*(.+)$")

ROLE_SOURCE = "source"
_ROLE_RE = re.compile(r"^(source|ref-\d+)$")


@dataclass(frozen=True)
class DepToken:
    id: int
    form: str
    head: int
    deprel: str = "_"

    def __post_init__(self):
        if self.id < 1:
            raise IntegrityError(f"token id must be >= 1, got {self.id}")
        if self.head < 0:
            raise IntegrityError(f"token head must be >= 0, got {self.head}")
        if self.head == self.id:
            raise IntegrityError(f"token {self.id} attaches to itself")


@dataclass(frozen=True)
class DepSentence:
    tokens: tuple[DepToken, ...]
    sent_id: str | None = None

    def __post_init__(self):
        name = self.sent_id or "<unnamed>"
        n = len(self.tokens)
        if n == 0:
            raise IntegrityError(f"sentence {name}: no tokens")
        for expect, token in enumerate(self.tokens, start=1):
            if token.id != expect:
                raise IntegrityError(
                    f"sentence {name}: token ids not contiguous "
                    f"(expected {expect}, got {token.id})"
                )
            if token.head > n:
                raise IntegrityError(
                    f"sentence {name}: token {token.id} head {token.head} "
                    f"does not exist (sentence has {n} tokens)"
                )
        if not any(t.head == 0 for t in self.tokens):
            raise IntegrityError(f"sentence {name}: no root (head = 0) token")
        self._check_acyclic(name)

    def _check_acyclic(self, name: str) -> None:
        state = [0] * (len(self.tokens) + 1)  # 0 unseen, 1 on path, 2 done
        for token in self.tokens:
            i = token.id
            path = []
            while i != 0 and state[i] == 0:
                state[i] = 1
                path.append(i)
                i = self.tokens[i - 1].head
            if i != 0 and state[i] == 1:
                raise IntegrityError(f"sentence {name}: head cycle through token {i}")
            for p in path:
                state[p] = 2


def parse_conllu(text: str) -> list[DepSentence]:
    """Parse CoNLL-U text into validated dependency sentences."""
    sentences: list[DepSentence] = []
    tokens: list[DepToken] = []
    sent_id: str | None = None

    def flush():
        nonlocal tokens, sent_id
        if tokens:
            sentences.append(DepSentence(tokens=tuple(tokens), sent_id=sent_id))
        tokens = []
        sent_id = None

    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            match = _SENT_ID.match(line)
            if match:
                sent_id = match.group(1).strip()
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ParseError(
                f"line {lineno}: expected 10 tab-separated columns, got {len(cols)}"
            )
        if _RANGE_ID.match(cols[0]) or _EMPTY_ID.match(cols[0]):
            continue
        try:
            tok_id = int(cols[0])
            head = int(cols[6])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: non-integer id or head: {exc}") from exc
        tokens.append(DepToken(id=tok_id, form=cols[1], head=head, deprel=cols[7]))
    flush()
    return sentences


def serialize_conllu(sentences: list[DepSentence]) -> str:
    """Render sentences back to CoNLL-U (retained columns only, `_` elsewhere)."""
    blocks: list[str] = []
    for sent in sentences:
        lines: list[str] = []
        if sent.sent_id is not None:
            lines.append(f"# sent_id = {sent.sent_id}")
        for t in sent.tokens:
            lines.append(
                "\t".join((str(t.id), t.form, "_", "_", "_", "_", str(t.head), t.deprel, "_", "_"))
            )
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def tree_depth(sentence: DepSentence) -> int:
    """Maximum node depth, with root-attached tokens at depth 1.

    Depth 1 for roots keeps single-token sentences at a nonzero depth, so
    depth ratios are always finite.
    """
    depths = [0] * (len(sentence.tokens) + 1)
    for token in sentence.tokens:
        chain = []
        i = token.id
        while i != 0 and depths[i] == 0:
            chain.append(i)
            i = sentence.tokens[i - 1].head
        base = 0 if i == 0 else depths[i]
        for node in reversed(chain):
            base += 1
            depths[node] = base
    return max(depths[1:])


def load_tree_index(path: str | Path) -> dict[tuple[str, int, str], str]:
    """Load the sidecar index mapping (doc_id, sent_index, role) -> sent_id.

    The file is a JSON array of
    ``{"doc_id": ..., "sent_index": ..., "role": "source"|"ref-k", "sent_id": ...}``.
    """
    path = Path(path)
    try:
        records = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(records, list):
        raise ParseError(f"{path}: expected a JSON array of index records")
    index: dict[tuple[str, int, str], str] = {}
    for i, rec in enumerate(records):
        try:
            role = str(rec["role"])
            key = (str(rec["doc_id"]), int(rec["sent_index"]), role)
            sent_id = str(rec["sent_id"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: record {i}: {exc}") from exc
        if not _ROLE_RE.match(role):
            raise ParseError(f"{path}: record {i}: bad role {role!r}")
        if key in index:
            raise IntegrityError(f"{path}: duplicate index key {key}")
        index[key] = sent_id
    return index


class TreeBank:
    """CoNLL-U sentences addressable by (doc_id, sent_index, role)."""

    def __init__(self, sentences: list[DepSentence], index: dict[tuple[str, int, str], str]):
        self.by_sent_id: dict[str, DepSentence] = {}
        for sent in sentences:
            if sent.sent_id is None:
                continue
            if sent.sent_id in self.by_sent_id:
                raise IntegrityError(f"duplicate sent_id {sent.sent_id!r} in treebank")
            self.by_sent_id[sent.sent_id] = sent
        for key, sent_id in index.items():
            if sent_id not in self.by_sent_id:
                raise IntegrityError(f"index entry {key} points at missing sent_id {sent_id!r}")
        self.index = index

    @classmethod
    def load(cls, conllu_path: str | Path, index_path: str | Path) -> "TreeBank":
        sentences = parse_conllu(Path(conllu_path).read_text(encoding="utf-8"))
        return cls(sentences, load_tree_index(index_path))

    def tree_for(self, doc_id: str, sent_index: int, role: str) -> DepSentence:
        key = (doc_id, sent_index, role)
        try:
            return self.by_sent_id[self.index[key]]
        except KeyError:
            raise DataError(f"no tree indexed for {key}") from None

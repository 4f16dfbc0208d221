"""Dataset loading: TSV and N-Triples parsing, interning, split handling."""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

from .types import Interner, Triple, Vocabulary

logger = logging.getLogger(__name__)

FORMATS = ("tsv", "nt")


class ParseError(ValueError):
    """A malformed input line, with file position attached."""

    def __init__(self, message: str, path: str = "<data>", lineno: int = 0):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


def detect_format(path: str) -> str:
    """Pick a parser from the file extension; TSV is the fallback."""
    ext = os.path.splitext(path)[1].lower()
    return "nt" if ext == ".nt" else "tsv"


def parse_tsv_line(line: str, path: str = "<data>", lineno: int = 0) -> tuple[str, str, str] | None:
    """One tab-separated ``subject<TAB>property<TAB>object`` statement.

    Returns None for blank lines.  Surrounding whitespace on each field
    is trimmed; fields may not be empty after trimming.
    """
    stripped = line.strip("\r\n")
    if not stripped.strip():
        return None
    fields = stripped.split("\t")
    if len(fields) != 3:
        raise ParseError(f"expected 3 tab-separated fields, got {len(fields)}", path, lineno)
    s, p, o = (f.strip() for f in fields)
    if not s or not p or not o:
        raise ParseError("empty field", path, lineno)
    return s, p, o


_NT_ESCAPES = {
    "t": "\t",
    "b": "\b",
    "n": "\n",
    "r": "\r",
    "f": "\f",
    '"': '"',
    "'": "'",
    "\\": "\\",
}


def _unescape(text: str, path: str, lineno: int) -> str:
    if "\\" not in text:
        return text
    out: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        if i + 1 >= n:
            raise ParseError("dangling escape", path, lineno)
        code = text[i + 1]
        if code in _NT_ESCAPES:
            out.append(_NT_ESCAPES[code])
            i += 2
        elif code == "u" or code == "U":
            width = 4 if code == "u" else 8
            hexpart = text[i + 2 : i + 2 + width]
            if len(hexpart) != width:
                raise ParseError(f"truncated \\{code} escape", path, lineno)
            try:
                out.append(chr(int(hexpart, 16)))
            except ValueError as exc:
                raise ParseError(f"bad \\{code} escape: {hexpart!r}", path, lineno) from exc
            i += 2 + width
        else:
            raise ParseError(f"unknown escape \\{code}", path, lineno)
    return "".join(out)


def _read_term(line: str, pos: int, path: str, lineno: int) -> tuple[str, int]:
    """Read one RDF term starting at ``pos``; return (label, next position).

    IRIs become their bracket-stripped text, blank nodes keep their
    ``_:`` form, and literals become their lexical form with any
    language tag or datatype dropped.
    """
    n = len(line)
    while pos < n and line[pos] in " \t":
        pos += 1
    if pos >= n:
        raise ParseError("unexpected end of statement", path, lineno)
    ch = line[pos]
    if ch == "<":
        end = line.find(">", pos + 1)
        if end < 0:
            raise ParseError("unterminated IRI", path, lineno)
        label = _unescape(line[pos + 1 : end], path, lineno)
        if not label:
            raise ParseError("empty IRI", path, lineno)
        return label, end + 1
    if ch == "_" and pos + 1 < n and line[pos + 1] == ":":
        end = pos + 2
        while end < n and line[end] not in " \t":
            end += 1
        if end == pos + 2:
            raise ParseError("empty blank node label", path, lineno)
        return line[pos:end], end
    if ch == '"':
        end = pos + 1
        while end < n:
            if line[end] == "\\":
                end += 2
                continue
            if line[end] == '"':
                break
            end += 1
        if end >= n:
            raise ParseError("unterminated literal", path, lineno)
        label = _unescape(line[pos + 1 : end], path, lineno)
        pos = end + 1
        # Language tag or datatype annotation: parsed and discarded.
        if pos < n and line[pos] == "@":
            while pos < n and line[pos] not in " \t":
                pos += 1
        elif line.startswith("^^", pos):
            pos += 2
            if pos >= n or line[pos] != "<":
                raise ParseError("malformed datatype annotation", path, lineno)
            close = line.find(">", pos)
            if close < 0:
                raise ParseError("unterminated datatype IRI", path, lineno)
            pos = close + 1
        if not label:
            raise ParseError("empty literal", path, lineno)
        return label, pos
    raise ParseError(f"unexpected character {ch!r}", path, lineno)


def parse_ntriples_line(line: str, path: str = "<data>", lineno: int = 0) -> tuple[str, str, str] | None:
    """One N-Triples statement; None for blank lines and comments."""
    stripped = line.strip()
    if not stripped or stripped.startswith("#"):
        return None
    if not stripped.endswith("."):
        raise ParseError("statement must end with '.'", path, lineno)
    body = stripped[:-1]
    s, pos = _read_term(body, 0, path, lineno)
    p, pos = _read_term(body, pos, path, lineno)
    o, pos = _read_term(body, pos, path, lineno)
    if body[pos:].strip():
        raise ParseError("trailing content after object term", path, lineno)
    return s, p, o


def iter_statements(path: str, fmt: str | None = None, lenient: bool = False):
    """Yield (subject, property, object) label triples from a file.

    ``fmt`` is "tsv", "nt", or None for extension-based detection.  In
    lenient mode malformed lines are counted and skipped instead of
    raising.
    """
    use = fmt or detect_format(path)
    if use not in FORMATS:
        raise ValueError(f"unknown format: {use!r}")
    parse = parse_tsv_line if use == "tsv" else parse_ntriples_line
    skipped = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            try:
                record = parse(line, path, lineno)
            except ParseError:
                if not lenient:
                    raise
                skipped += 1
                continue
            if record is not None:
                yield record
    if skipped:
        logger.warning("%s: skipped %d malformed lines", path, skipped)


@dataclass
class DatasetSplit:
    """Interned train/valid/test triples over one shared vocabulary.

    Each split is duplicate-free, and triples already present in an
    earlier split are dropped from later ones (train < valid < test),
    so the three lists are pairwise disjoint.
    """

    vocab: Vocabulary
    train: list[Triple]
    valid: list[Triple] = field(default_factory=list)
    test: list[Triple] = field(default_factory=list)
    dropped_duplicate: int = 0
    dropped_cross_split: int = 0

    def evidence(self, include_valid: bool = True) -> list[Triple]:
        """Triples the predictor may treat as known facts."""
        if include_valid and self.valid:
            return self.train + self.valid
        return list(self.train)

    def all_triples(self) -> list[Triple]:
        return self.train + self.valid + self.test

    @property
    def n_nodes(self) -> int:
        return self.vocab.n_nodes

    @property
    def n_properties(self) -> int:
        return self.vocab.n_properties


def intern_triples(
    records,
    vocab: Vocabulary,
    seen: set[Triple],
) -> tuple[list[Triple], int, int]:
    """Intern labelled records, deduplicating against ``seen`` in place.

    Returns (triples, within-split duplicates dropped, cross-split
    duplicates dropped).  ``seen`` accumulates across calls so later
    splits exclude earlier ones.
    """
    out: list[Triple] = []
    local: set[Triple] = set()
    dup = 0
    cross = 0
    for s, p, o in records:
        t = (vocab.nodes.intern(s), vocab.properties.intern(p), vocab.nodes.intern(o))
        if t in local:
            dup += 1
            continue
        if t in seen:
            cross += 1
            continue
        local.add(t)
        out.append(t)
    seen.update(local)
    return out, dup, cross


def load_dataset(
    train_path: str,
    valid_path: str | None = None,
    test_path: str | None = None,
    fmt: str | None = None,
    lenient: bool = False,
) -> DatasetSplit:
    """Load up to three split files into one interned DatasetSplit."""
    vocab = Vocabulary(nodes=Interner(), properties=Interner())
    seen: set[Triple] = set()
    dup_total = 0
    cross_total = 0

    def load(path: str | None) -> list[Triple]:
        nonlocal dup_total, cross_total
        if path is None:
            return []
        triples, dup, cross = intern_triples(iter_statements(path, fmt, lenient), vocab, seen)
        dup_total += dup
        cross_total += cross
        if dup:
            logger.warning("%s: dropped %d duplicate statements", path, dup)
        if cross:
            logger.warning("%s: dropped %d statements already in an earlier split", path, cross)
        return triples

    train = load(train_path)
    if not train:
        raise ValueError(f"no statements loaded from {train_path}")
    valid = load(valid_path)
    test = load(test_path)
    return DatasetSplit(
        vocab=vocab,
        train=train,
        valid=valid,
        test=test,
        dropped_duplicate=dup_total,
        dropped_cross_split=cross_total,
    )


def write_tsv(path: str, triples, vocab: Vocabulary) -> None:
    """Serialize interned triples back to three-column TSV."""
    with open(path, "w", encoding="utf-8") as fh:
        for s, p, o in triples:
            fh.write(
                f"{vocab.nodes.resolve(s)}\t{vocab.properties.resolve(p)}\t{vocab.nodes.resolve(o)}\n"
            )

"""Word-vector models, database-value textification, and initial tuple/column vectors."""
from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

_WORD_RE = re.compile(r"[a-z0-9]+")

Value = object  # a cell: str, int, float, or None


class ModelFormatError(ValueError):
    """Raised when a word-vector text file cannot be parsed."""


def bare_name(column: str) -> str:
    """Strip any relation qualifier: ``products.name`` -> ``name``."""
    return column.rsplit(".", 1)[-1]


def _as_number(text: str) -> int | float | None:
    s = text.strip()
    if not s or "_" in s:
        return None
    try:
        return int(s)
    except ValueError:
        pass
    try:
        value = float(s)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def canonical_number(value: int | float) -> str:
    """Integers without a decimal point, reals with shortest round-trip text."""
    if isinstance(value, int):
        return str(value)
    if value == int(value) and abs(value) < 1e16:
        # repr already keeps the trailing .0 for float-typed integers
        return repr(value)
    return repr(value)


def textify_value(column_name: str, value: Value) -> list[str]:
    """Turn one cell into corpus tokens.

    Numbers become a single ``<column>_<number>`` token so that e.g. a price
    and a weight of 12 stay distinguishable.  Missing data (None, empty text,
    or the literal string 'None') yields no tokens at all.
    """
    if not column_name:
        raise ValueError("column_name must be nonempty")
    if value is None:
        return []
    if isinstance(value, bool):
        return [str(value).lower()]
    if isinstance(value, (int, float)):
        if isinstance(value, float) and not math.isfinite(value):
            return []
        return [f"{column_name.lower()}_{canonical_number(value)}"]
    text = str(value).strip()
    if not text or text.lower() == "none":
        return []
    number = _as_number(text)
    if number is not None:
        return [f"{column_name.lower()}_{canonical_number(number)}"]
    return _WORD_RE.findall(text.lower())


def hash_embedding(token: str, dimension: int, seed: int) -> np.ndarray:
    """Deterministic unit-norm vector for a token; a stand-in for a trained model."""
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    digest = hashlib.blake2b(f"{seed}|{token}".encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "big"))
    vec = rng.standard_normal(dimension)
    norm = np.linalg.norm(vec)
    while norm == 0.0:  # essentially unreachable, kept for totality
        vec = rng.standard_normal(dimension)
        norm = np.linalg.norm(vec)
    return vec / norm


@dataclass
class WordModel:
    """Token -> vector mapping with a hashing fallback for unseen tokens."""

    dimension: int
    entries: dict[str, np.ndarray] = field(default_factory=dict)
    fallback_seed: int = 0

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        for token, vec in self.entries.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (self.dimension,):
                raise ValueError(f"vector for {token!r} has shape {arr.shape}, want ({self.dimension},)")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"vector for {token!r} has non-finite components")
            self.entries[token] = arr

    def __contains__(self, token: str) -> bool:
        return token in self.entries

    def vector(self, token: str) -> np.ndarray:
        """Never fails: unknown tokens route to the deterministic fallback."""
        known = self.entries.get(token)
        if known is not None:
            return known
        return hash_embedding(token, self.dimension, self.fallback_seed)


def load_model(path: str | Path) -> WordModel:
    """Read word2vec text format: header ``count dim``, then ``token v1 .. vD`` lines."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ModelFormatError(f"{path}: malformed header (empty file)")
    header = lines[0].split()
    if len(header) != 2:
        raise ModelFormatError(f"{path}:1: malformed header {lines[0]!r}, expected 'count dim'")
    try:
        count, dim = int(header[0]), int(header[1])
    except ValueError as exc:
        raise ModelFormatError(f"{path}:1: malformed header {lines[0]!r}") from exc
    if dim < 1:
        raise ModelFormatError(f"{path}:1: dimension must be >= 1")
    entries: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != dim + 1:
            raise ModelFormatError(f"{path}:{lineno}: expected {dim} components, found {len(parts) - 1}")
        token = parts[0]
        try:
            vec = np.array([float(p) for p in parts[1:]], dtype=np.float64)
        except ValueError as exc:
            raise ModelFormatError(f"{path}:{lineno}: unparsable component") from exc
        if not np.all(np.isfinite(vec)):
            raise ModelFormatError(f"{path}:{lineno}: non-finite component")
        entries[token] = vec
    if len(entries) != count:
        raise ModelFormatError(f"{path}: header promises {count} entries, found {len(entries)}")
    return WordModel(dimension=dim, entries=entries)


def write_model(model: WordModel, path: str | Path) -> None:
    """Canonical serialization; round-trips bit-for-bit through load_model."""
    lines = [f"{len(model.entries)} {model.dimension}"]
    for token, vec in model.entries.items():
        lines.append(token + " " + " ".join(repr(float(x)) for x in vec))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class ColumnWeights:
    """Relative importance of columns for the inter-column weighted average."""

    weights: Mapping[str, float] = field(default_factory=dict)
    default_weight: float = 1.0

    def __post_init__(self) -> None:
        if self.default_weight < 0:
            raise ValueError("default_weight must be nonnegative")
        for col, w in self.weights.items():
            if w < 0:
                raise ValueError(f"weight for {col!r} must be nonnegative")

    def weight(self, column: str) -> float:
        if column in self.weights:
            return self.weights[column]
        return self.weights.get(bare_name(column), self.default_weight)


UNIFORM_WEIGHTS = ColumnWeights()


def column_vector(tuple_values: Mapping[str, Value], column: str, model: WordModel) -> np.ndarray:
    """Unweighted mean of the value's token vectors; zero vector for empty values."""
    tokens = textify_value(bare_name(column), tuple_values[column])
    if not tokens:
        return np.zeros(model.dimension)
    return np.mean([model.vector(t) for t in tokens], axis=0)


def tuple_vector(
    tuple_values: Mapping[str, Value],
    model: WordModel,
    weights: ColumnWeights = UNIFORM_WEIGHTS,
) -> np.ndarray:
    """Inter-column weighted average of column vectors, skipping empty columns."""
    if not tuple_values:
        raise ValueError("tuple must have at least one column")
    total = 0.0
    acc = np.zeros(model.dimension)
    for column, value in tuple_values.items():
        tokens = textify_value(bare_name(column), value)
        if not tokens:
            continue
        w = weights.weight(column)
        acc += w * np.mean([model.vector(t) for t in tokens], axis=0)
        total += w
    if total == 0.0:
        if any(textify_value(bare_name(c), v) for c, v in tuple_values.items()):
            raise ValueError("all applicable column weights are zero")
        return np.zeros(model.dimension)  # fully-empty tuple: flagged by callers
    return acc / total


def _inject_key(words: Sequence[str], key: str, every: int) -> list[str]:
    out: list[str] = []
    for idx, word in enumerate(words, start=1):
        out.append(word)
        if idx % every == 0:
            out.append(key)
    return out


def key_token(table: str, ordinal: int) -> str:
    return f"{table}_key_{ordinal}"


def extract_corpora(
    tables: Mapping[str, Sequence[Mapping[str, Value]]],
    key_every_columns: int,
    key_every_tuples: int,
) -> tuple[str, str]:
    """Emit the two training corpora: column sentences and tuple sentences.

    Every table gets a generated unique key per row; the key token is injected
    after every ``key_every_columns`` (resp. ``key_every_tuples``) words so the
    key vector absorbs the tuple's content during training.
    """
    if key_every_columns < 1 or key_every_tuples < 1:
        raise ValueError("key injection intervals must be >= 1")
    column_lines: list[str] = []
    tuple_lines: list[str] = []
    for table, rows in tables.items():
        for ordinal, row in enumerate(rows, start=1):
            key = key_token(table, ordinal)
            tuple_words: list[str] = []
            for column, value in row.items():
                tokens = textify_value(bare_name(column), value)
                if not tokens:
                    continue
                column_lines.append(" ".join(_inject_key(tokens, key, key_every_columns)))
                tuple_words.extend(tokens)
            if tuple_words:
                tuple_lines.append(" ".join(_inject_key(tuple_words, key, key_every_tuples)))
    columns_corpus = "\n".join(column_lines) + ("\n" if column_lines else "")
    tuples_corpus = "\n".join(tuple_lines) + ("\n" if tuple_lines else "")
    return columns_corpus, tuples_corpus

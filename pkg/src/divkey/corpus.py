"""Dataset ingestion, pretrained embeddings, config files and checkpoints."""

from __future__ import annotations

import io
import json
import logging
import math
import struct
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CorruptCheckpoint, DimensionMismatch, EmptyDocument, IoError, ParseError
from .graph import WordGraph, build_graph
from .text import TokenizedDocument, find_phrase, phrase_tokens, stem, tokenize, unique_phrases

log = logging.getLogger(__name__)

MAGIC = b"DIVKEY1\n"


@dataclass
class DatasetRecord:
    doc_id: str
    title: str
    abstract: str
    keyphrases: list[str] = field(default_factory=list)

    @property
    def text(self) -> str:
        return f"{self.title}\n{self.abstract}"


@dataclass
class IngestedDocument:
    doc_id: str
    doc: TokenizedDocument
    graph: WordGraph
    golds: list[tuple[int, ...]]  # node indices per present gold phrase
    gold_tokens: list[tuple[str, ...]]
    skipped: bool = False  # eval split: no present gold, not scored


@dataclass
class IngestedDataset:
    documents: list[IngestedDocument]
    dropped_docs: int = 0
    dropped_phrases: int = 0

    def __len__(self) -> int:
        return len(self.documents)


# -- JSONL -----------------------------------------------------------------

def _record_from_obj(obj, lineno: int) -> DatasetRecord:
    if not isinstance(obj, dict):
        raise ParseError(lineno, "expected a JSON object")
    for key in ("title", "abstract"):
        if not isinstance(obj.get(key), str):
            raise ParseError(lineno, f"field {key!r} missing or not a string")
    kps = obj.get("keyphrases")
    if not isinstance(kps, list) or not all(isinstance(k, str) for k in kps):
        raise ParseError(lineno, "field 'keyphrases' missing or not an array of strings")
    doc_id = obj.get("doc_id", obj.get("id", lineno - 1))
    return DatasetRecord(str(doc_id), obj["title"], obj["abstract"], list(kps))


def parse_jsonl(lines: Iterable[str]) -> list[DatasetRecord]:
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(lineno, f"invalid JSON ({exc.msg})") from None
        records.append(_record_from_obj(obj, lineno))
    return records


def load_jsonl(path) -> list[DatasetRecord]:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_jsonl(fh)
    except OSError as exc:
        raise IoError(str(exc)) from exc


def dump_jsonl(records: Iterable[DatasetRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            obj = {"doc_id": r.doc_id, "title": r.title, "abstract": r.abstract, "keyphrases": r.keyphrases}
            fh.write(json.dumps(obj) + "\n")


# -- ingestion -------------------------------------------------------------

def ingest_record(record: DatasetRecord, max_length: int = 512) -> IngestedDocument:
    """Tokenize one record and map its present gold phrases onto graph nodes.

    Raises EmptyDocument when title and abstract hold no token.
    """
    doc = tokenize(record.text, max_length=max_length)
    graph = build_graph(doc)
    index = graph.node_table.index()
    golds, gold_tokens = [], []
    for toks in unique_phrases(record.keyphrases):
        stems = tuple(stem(t) for t in toks)
        if find_phrase(doc.stems, stems) >= 0:
            golds.append(tuple(index[s] for s in stems))
            gold_tokens.append(toks)
    return IngestedDocument(record.doc_id, doc, graph, golds, gold_tokens)


def ingest(records: Sequence[DatasetRecord], split: str = "train", max_length: int = 512) -> IngestedDataset:
    """Keep only gold phrases occurring contiguously (after stemming) in the text.

    Training documents left without a gold phrase are dropped; evaluation
    documents are kept but flagged ``skipped``.
    """
    if split not in ("train", "eval"):
        raise ValueError(f"unknown split {split!r}")
    out = IngestedDataset([])
    for rec in records:
        try:
            item = ingest_record(rec, max_length)
        except EmptyDocument:
            log.warning("dropping %s: empty document", rec.doc_id)
            out.dropped_docs += 1
            continue
        out.dropped_phrases += len(unique_phrases(rec.keyphrases)) - len(item.golds)
        if not item.golds:
            if split == "train":
                log.info("dropping %s: no present keyphrase", rec.doc_id)
                out.dropped_docs += 1
                continue
            item.skipped = True
        out.documents.append(item)
    return out


# -- pretrained embeddings -------------------------------------------------

@dataclass
class EmbeddingStats:
    hits: int
    misses: int

    @property
    def hit_ratio(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0


def load_pretrained_embeddings(
    path, vocab: Sequence[str], rng: np.random.Generator | None = None, dtype=np.float32
) -> tuple[np.ndarray, EmbeddingStats]:
    """Stem-keyed table from a ``word v1 ... vd`` text file.

    Surface forms that share a stem are averaged. Vocabulary stems without
    any vector get Glorot-normal rows. A leading ``count dim`` header line
    (fastText ``.vec`` style) is skipped.
    """
    wanted = set(vocab)
    sums: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    dim = None
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise IoError(str(exc)) from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            parts = [p for p in parts if p]
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            vec = parts[1:]
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise DimensionMismatch(f"line {lineno}: {len(vec)} values, expected {dim}")
            s = stem(parts[0])
            if s not in wanted:
                continue
            v = np.array(vec, dtype=np.float64)
            if s in sums:
                sums[s] += v
                counts[s] += 1
            else:
                sums[s], counts[s] = v, 1
    if dim is None:
        raise DimensionMismatch("embedding file holds no vectors")
    rng = rng or np.random.default_rng(0)
    std = math.sqrt(2.0 / (len(vocab) + dim))
    table = (rng.standard_normal((len(vocab), dim)) * std).astype(dtype)
    hits = 0
    for i, s in enumerate(vocab):
        if s in sums:
            table[i] = sums[s] / counts[s]
            hits += 1
    return table, EmbeddingStats(hits, len(vocab) - hits)


# -- config files ----------------------------------------------------------

def parse_config_text(text: str) -> dict[str, str]:
    """``key = value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(lineno, f"expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path) -> dict[str, str]:
    try:
        return parse_config_text(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(str(exc)) from exc


def _coerce(value: str, kind):
    kind = kind if isinstance(kind, str) else kind.__name__
    if kind == "bool":
        v = value.lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    return value


def apply_config(obj, values: dict[str, str], prefix: str = ""):
    """Set the dataclass fields of ``obj`` named in ``values`` (coercing text)."""
    for f in fields(obj):
        key = prefix + f.name
        if key in values:
            setattr(obj, f.name, _coerce(str(values[key]), f.type))
    return obj


def format_config(obj, prefix: str = "") -> str:
    lines = []
    for f in fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{prefix}{f.name} = {v}")
    return "\n".join(lines) + "\n"


# -- checkpoints -----------------------------------------------------------

_DTYPE_TAGS = {"f4": np.dtype("<f4"), "f8": np.dtype("<f8"), "u1": np.dtype("u1"), "i8": np.dtype("<i8")}


def _tag(a: np.ndarray) -> str:
    for tag, dt in _DTYPE_TAGS.items():
        if a.dtype == dt or a.dtype == dt.newbyteorder("="):
            return tag
    raise TypeError(f"unsupported dtype {a.dtype}")


def _write_array(buf: io.BytesIO, name: str, a: np.ndarray) -> None:
    tag = _tag(a)
    raw_name = name.encode("utf-8")
    buf.write(struct.pack("<H", len(raw_name)))
    buf.write(raw_name)
    buf.write(tag.encode("ascii"))
    buf.write(struct.pack("<B", a.ndim))
    buf.write(struct.pack(f"<{a.ndim}Q", *a.shape))
    buf.write(np.ascontiguousarray(a, dtype=_DTYPE_TAGS[tag]).tobytes())


def checkpoint_bytes(checkpoint) -> bytes:
    from .trainer import Checkpoint, TrainConfig

    if not isinstance(checkpoint, Checkpoint):
        checkpoint = Checkpoint(checkpoint, TrainConfig())
    model = checkpoint.model
    config = format_config(model.config, "model.") + format_config(checkpoint.train_config, "train.")
    config += f"step = {checkpoint.step}\nvalid_score = {checkpoint.valid_score!r}\n"
    config += f"freeze_embeddings = {'true' if model.freeze_embeddings else 'false'}\n"
    arrays = {"vocab": np.frombuffer("\n".join(model.vocab).encode("utf-8"), dtype=np.uint8)}
    arrays.update(model.state_arrays())

    buf = io.BytesIO()
    buf.write(MAGIC)
    raw = config.encode("utf-8")
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)
    buf.write(struct.pack("<I", len(arrays)))
    for name, a in arrays.items():
        _write_array(buf, name, a)
    return buf.getvalue()


def save_checkpoint(checkpoint, path) -> None:
    """Write a model (or a trainer ``Checkpoint``) to ``path``."""
    data = checkpoint_bytes(checkpoint)
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise IoError(str(exc)) from exc


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptCheckpoint(what, "file truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def checkpoint_from_bytes(data: bytes):
    from .model import KeyphraseModel, ModelConfig
    from .trainer import Checkpoint, TrainConfig

    r = _Reader(data)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise CorruptCheckpoint("magic", "not a DIVKEY1 file")
    (n,) = r.unpack("<I", "config")
    try:
        values = parse_config_text(r.take(n, "config").decode("utf-8"))
    except (UnicodeDecodeError, ParseError) as exc:
        raise CorruptCheckpoint("config", str(exc)) from None
    try:
        mcfg = apply_config(ModelConfig(), values, "model.")
        tcfg = apply_config(TrainConfig(), values, "train.")
        step = int(values.get("step", 0))
        valid = float(values.get("valid_score", "nan"))
        frozen = _coerce(values.get("freeze_embeddings", "false"), "bool")
    except ValueError as exc:
        raise CorruptCheckpoint("config", str(exc)) from None

    (count,) = r.unpack("<I", "array count")
    arrays = {}
    for _ in range(count):
        (ln,) = r.unpack("<H", "array name")
        name = r.take(ln, "array name").decode("utf-8", errors="replace")
        tag = r.take(2, name).decode("ascii", errors="replace")
        if tag not in _DTYPE_TAGS:
            raise CorruptCheckpoint(name, f"unknown dtype tag {tag!r}")
        (ndim,) = r.unpack("<B", name)
        shape = r.unpack(f"<{ndim}Q", name)
        dt = _DTYPE_TAGS[tag]
        size = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        arrays[name] = np.frombuffer(r.take(size, name), dtype=dt).reshape(shape)
    if r.pos != len(data):
        raise CorruptCheckpoint("trailer", "unexpected bytes after the last array")
    if "vocab" not in arrays:
        raise CorruptCheckpoint("vocab", "missing")
    vocab = arrays.pop("vocab").tobytes().decode("utf-8").split("\n")

    model = KeyphraseModel(mcfg, vocab)
    model.freeze_embeddings = frozen
    want_tag = _tag(np.zeros(0, dtype=model.dtype))
    for name, shape in model.expected_shapes().items():
        if name not in arrays:
            raise CorruptCheckpoint(name, "missing")
        a = arrays[name]
        if a.shape != shape:
            raise CorruptCheckpoint(name, f"shape {a.shape} does not match config {shape}")
        if _tag(a) != want_tag:
            raise CorruptCheckpoint(name, f"dtype {_tag(a)} does not match config {want_tag}")
    extra = set(arrays) - set(model.expected_shapes())
    if extra:
        raise CorruptCheckpoint(sorted(extra)[0], "unexpected array")
    model.load_arrays(arrays)
    return Checkpoint(model, tcfg, step, valid)


def load_checkpoint(path):
    """Read a checkpoint; returns a trainer ``Checkpoint`` whose ``model`` is ready."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return checkpoint_from_bytes(data)

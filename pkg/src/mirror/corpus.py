"""Corpus ingestion: windowing into (context, query, response) triples,
vocabulary construction, and padded id batches.

Unified corpus format is UTF-8 JSON-lines, one dialogue per line:
    {"turns": ["...", ...], "speakers": [0, 1, ...]}   # speakers optional
Importers exist for the raw DailyDialog format (turns joined by "__eou__")
and for tab-separated three-column triple files.
"""

import json
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

PAD, UNK, BOS, EOS, SEP = 0, 1, 2, 3, 4
RESERVED = ["<pad>", "<unk>", "<bos>", "<eos>", "<sep>"]

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, split punctuation off as tokens."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Dialogue:
    turns: list[list[str]]
    speakers: list[int] | None = None


@dataclass
class Triple:
    """One training unit: context turns, query turn, response turn."""

    context: list[list[str]]
    query: list[str]
    response: list[str]
    source: tuple[int, int] = (0, 0)  # (dialogue index, window start)

    @property
    def c_all(self) -> list[list[str]]:
        return self.context + [self.query]


@dataclass
class WindowReport:
    triples: int = 0
    dialogues: int = 0
    skipped_short: int = 0


def window_dialogues(dialogues, window=3, stride=1, report: WindowReport | None = None):
    """Slide a `window`-turn window over each dialogue.

    Each window becomes one Triple: first window-2 turns -> context,
    penultimate -> query, last -> response. Dialogues shorter than the
    window are skipped (counted in `report` when given).
    """
    if window < 3:
        raise ValueError("window must be at least 3 turns")
    triples = []
    for d_idx, dialogue in enumerate(dialogues):
        turns = dialogue.turns
        if len(turns) < window:
            if report is not None:
                report.skipped_short += 1
            continue
        if report is not None:
            report.dialogues += 1
        for start in range(0, len(turns) - window + 1, stride):
            triples.append(Triple(
                context=[list(t) for t in turns[start:start + window - 2]],
                query=list(turns[start + window - 2]),
                response=list(turns[start + window - 1]),
                source=(d_idx, start),
            ))
    if report is not None:
        report.triples = len(triples)
    return triples


class Vocabulary:
    """token <-> id maps with five reserved ids (PAD, UNK, BOS, EOS, SEP)."""

    def __init__(self, tokens: list[str]):
        self.id_to_token = RESERVED + list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.id_to_token)

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.token_to_id.get(t, UNK) for t in tokens]

    def decode(self, ids, strip_special=True) -> list[str]:
        out = []
        for i in ids:
            i = int(i)
            if strip_special and i in (PAD, BOS, EOS):
                continue
            out.append(self.id_to_token[i])
        return out

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for token in self.id_to_token[len(RESERVED):]:
                f.write(token + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            tokens = [line.rstrip("\n") for line in f if line.rstrip("\n")]
        return cls(tokens)


def build_vocabulary(triples, max_size=20000) -> Vocabulary:
    """Most frequent tokens, ties broken lexicographically for determinism."""
    if not triples:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts = Counter()
    for t in triples:
        for turn in t.context:
            counts.update(turn)
        counts.update(t.query)
        counts.update(t.response)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary([tok for tok, _ in ranked[:max_size]])


@dataclass
class Batch:
    """Padded id matrices and masks; *_tgt views carry BOS ... EOS framing."""

    c: np.ndarray
    c_mask: np.ndarray
    x: np.ndarray
    x_mask: np.ndarray
    y: np.ndarray
    y_mask: np.ndarray
    x_tgt: np.ndarray
    x_tgt_mask: np.ndarray
    y_tgt: np.ndarray
    y_tgt_mask: np.ndarray

    @property
    def size(self) -> int:
        return self.c.shape[0]


def _pad_rows(rows, dtype=np.int64):
    width = max(len(r) for r in rows)
    ids = np.full((len(rows), width), PAD, dtype=dtype)
    mask = np.zeros((len(rows), width), dtype=np.float32)
    for i, r in enumerate(rows):
        ids[i, :len(r)] = r
        mask[i, :len(r)] = 1.0
    return ids, mask


def encode_batch(triples, vocab: Vocabulary, max_len=50) -> Batch:
    """Encode triples to padded ids. Context turns are joined with SEP;
    each turn is truncated to max_len tokens before framing/joining."""
    if max_len < 2:
        raise ValueError("max_len must be at least 2")
    c_rows, x_rows, y_rows, x_tgt_rows, y_tgt_rows = [], [], [], [], []
    for t in triples:
        turns = [vocab.encode(turn[:max_len]) for turn in t.context]
        flat = []
        for i, turn in enumerate(turns):
            if i > 0:
                flat.append(SEP)
            flat.extend(turn)
        x_ids = vocab.encode(t.query[:max_len])
        y_ids = vocab.encode(t.response[:max_len])
        c_rows.append(flat)
        x_rows.append(x_ids)
        y_rows.append(y_ids)
        x_tgt_rows.append([BOS] + x_ids + [EOS])
        y_tgt_rows.append([BOS] + y_ids + [EOS])
    c, c_mask = _pad_rows(c_rows)
    x, x_mask = _pad_rows(x_rows)
    y, y_mask = _pad_rows(y_rows)
    x_tgt, x_tgt_mask = _pad_rows(x_tgt_rows)
    y_tgt, y_tgt_mask = _pad_rows(y_tgt_rows)
    return Batch(c, c_mask, x, x_mask, y, y_mask, x_tgt, x_tgt_mask, y_tgt, y_tgt_mask)


# ---------------------------------------------------------------------------
# File formats


def load_jsonl_corpus(path) -> list[Dialogue]:
    dialogues = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            turns = [tokenize(t) for t in rec["turns"]]
            turns = [t for t in turns if t]
            if not turns:
                continue
            dialogues.append(Dialogue(turns, rec.get("speakers")))
    return dialogues


def save_jsonl_corpus(dialogues, path):
    with open(path, "w", encoding="utf-8") as f:
        for d in dialogues:
            rec = {"turns": [" ".join(t) for t in d.turns]}
            if d.speakers is not None:
                rec["speakers"] = d.speakers
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def import_dailydialog(path) -> list[Dialogue]:
    """Raw DailyDialog lines: turns separated by the literal token __eou__."""
    dialogues = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            parts = [p.strip() for p in line.split("__eou__")]
            turns = [tokenize(p) for p in parts if p.strip()]
            turns = [t for t in turns if t]
            if turns:
                dialogues.append(Dialogue(turns))
    return dialogues


def import_tsv_triples(path) -> list[Dialogue]:
    """Tab-separated three-column triples, one dialogue of 3 turns per line."""
    dialogues = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise ValueError(f"expected 3 tab-separated columns, got {len(cols)}")
            turns = [tokenize(c) for c in cols]
            if all(turns):
                dialogues.append(Dialogue(turns))
    return dialogues

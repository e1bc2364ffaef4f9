"""Pairwise human-evaluation sessions: blinded A/B pairs, three judgments
per pair, majority-rule aggregation into wins/losses/ties fractions.

A session is a directory: session.json (pairs + hidden side mapping, written
once) and journal.jsonl (append-only judgment log). Crash recovery replays
the journal against session.json.
"""

import json
import os
import threading
import time
from dataclasses import dataclass, asdict

import numpy as np

REQUIRED_JUDGMENTS = 3
CHOICES = ("A", "B", "tie")


class EvalSessionError(Exception):
    code = "error"


class UnknownPairError(EvalSessionError):
    code = "unknown_pair"


class DuplicateJudgmentError(EvalSessionError):
    code = "duplicate_judgment"


class PairCompleteError(EvalSessionError):
    code = "pair_complete"


class InvalidChoiceError(EvalSessionError):
    code = "invalid_choice"


@dataclass
class EvalPair:
    pair_id: str
    dialogue_index: int
    context_lines: list  # context turns plus the query, as display strings
    response_a: str
    response_b: str
    a_is_focal: bool  # hidden; never serialized into annotator payloads

    def public_view(self):
        return {
            "pair_id": self.pair_id,
            "context": self.context_lines,
            "response_a": self.response_a,
            "response_b": self.response_b,
        }


@dataclass
class Judgment:
    pair_id: str
    annotator: str
    choice: str
    timestamp: float = 0.0


@dataclass
class AggregateResult:
    wins: float
    losses: float
    ties: float
    counted_pairs: int

    def as_dict(self):
        return asdict(self)


def load_model_outputs(path):
    """Model-output JSON-lines: {dialogue_index, response_text, decode_strategy,
    checkpoint_id} keyed by dialogue_index."""
    out = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out[int(rec["dialogue_index"])] = rec
    return out


class EvalSession:
    def __init__(self, session_id, pairs, session_dir):
        self.session_id = session_id
        self.pairs = {p.pair_id: p for p in pairs}
        self.pair_order = [p.pair_id for p in pairs]
        self.session_dir = session_dir
        self.judgments: dict[tuple, Judgment] = {}
        self._lock = threading.Lock()

    # -- construction -------------------------------------------------------

    @classmethod
    def create(cls, test_triples, outputs_focal, outputs_comparator, session_dir,
               n_pairs=200, seed=0, session_id=None):
        """Sample n_pairs dialogues without replacement and randomize sides."""
        if n_pairs > len(test_triples):
            raise ValueError(
                f"n_pairs={n_pairs} exceeds test-set size {len(test_triples)}"
            )
        rng = np.random.default_rng(seed)
        indices = rng.choice(len(test_triples), size=n_pairs, replace=False)
        pairs = []
        for pos, idx in enumerate(sorted(int(i) for i in indices)):
            if idx not in outputs_focal or idx not in outputs_comparator:
                raise ValueError(f"dialogue index {idx} missing from model outputs")
            triple = test_triples[idx]
            a_is_focal = bool(rng.random() < 0.5)
            focal_text = outputs_focal[idx]["response_text"]
            comp_text = outputs_comparator[idx]["response_text"]
            pairs.append(EvalPair(
                pair_id=f"p{pos:04d}",
                dialogue_index=idx,
                context_lines=[" ".join(t) for t in triple.c_all],
                response_a=focal_text if a_is_focal else comp_text,
                response_b=comp_text if a_is_focal else focal_text,
                a_is_focal=a_is_focal,
            ))
        session_id = session_id or f"session-{seed}-{n_pairs}"
        session = cls(session_id, pairs, session_dir)
        os.makedirs(session_dir, exist_ok=True)
        with open(os.path.join(session_dir, "session.json"), "w", encoding="utf-8") as f:
            json.dump({
                "session_id": session_id,
                "n_pairs": n_pairs,
                "seed": seed,
                "required_judgments": REQUIRED_JUDGMENTS,
                "pairs": [asdict(p) for p in pairs],
            }, f, ensure_ascii=False, indent=2, sort_keys=True)
        return session

    @classmethod
    def load(cls, session_dir):
        """Rebuild state from session.json plus journal replay."""
        with open(os.path.join(session_dir, "session.json"), encoding="utf-8") as f:
            data = json.load(f)
        pairs = [EvalPair(**p) for p in data["pairs"]]
        session = cls(data["session_id"], pairs, session_dir)
        journal = os.path.join(session_dir, "journal.jsonl")
        if os.path.exists(journal):
            with open(journal, encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if not line:
                        continue
                    j = Judgment(**json.loads(line))
                    session.judgments[(j.pair_id, j.annotator)] = j
        return session

    # -- annotation ---------------------------------------------------------

    def _judgment_count(self, pair_id):
        return sum(1 for (pid, _) in self.judgments if pid == pair_id)

    def next_pair(self, annotator):
        """First pair this annotator has not judged that still needs judgments."""
        with self._lock:
            for pid in self.pair_order:
                if (pid, annotator) in self.judgments:
                    continue
                if self._judgment_count(pid) >= REQUIRED_JUDGMENTS:
                    continue
                return self.pairs[pid]
        return None

    def record(self, judgment: Judgment):
        """Validate, append to the journal (durable before acknowledging),
        then update in-memory state."""
        if judgment.choice not in CHOICES:
            raise InvalidChoiceError(f"choice must be one of {CHOICES}")
        with self._lock:
            if judgment.pair_id not in self.pairs:
                raise UnknownPairError(judgment.pair_id)
            key = (judgment.pair_id, judgment.annotator)
            if key in self.judgments:
                raise DuplicateJudgmentError(f"{judgment.annotator} already judged {judgment.pair_id}")
            if self._judgment_count(judgment.pair_id) >= REQUIRED_JUDGMENTS:
                raise PairCompleteError(judgment.pair_id)
            if not judgment.timestamp:
                judgment.timestamp = time.time()
            path = os.path.join(self.session_dir, "journal.jsonl")
            with open(path, "a", encoding="utf-8") as f:
                f.write(json.dumps(asdict(judgment), sort_keys=True) + "\n")
                f.flush()
                os.fsync(f.fileno())
            self.judgments[key] = judgment

    # -- aggregation --------------------------------------------------------

    def completion(self):
        done = sum(
            1 for pid in self.pair_order
            if self._judgment_count(pid) >= REQUIRED_JUDGMENTS
        )
        return {
            "total_pairs": len(self.pair_order),
            "completed_pairs": done,
            "judgments": len(self.judgments),
        }

    def progress(self, annotator):
        judged = sum(1 for (pid, a) in self.judgments if a == annotator)
        return {"done": judged, "total": len(self.pair_order)}

    def aggregate(self, rule="majority") -> AggregateResult:
        """Fractions for the focal model over pairs with all 3 judgments.

        majority: >= 2 of 3 judgments for one side decides; a 1/1/1 split is
        a tie. pooled: every judgment is one vote, fractions over all votes.
        """
        by_pair: dict[str, list[Judgment]] = {}
        for (pid, _), j in self.judgments.items():
            by_pair.setdefault(pid, []).append(j)
        complete = {pid: js for pid, js in by_pair.items() if len(js) >= REQUIRED_JUDGMENTS}
        if not complete:
            raise EvalSessionError("no pairs with the required number of judgments")

        def unblind(pair, choice):
            if choice == "tie":
                return "tie"
            chose_a = choice == "A"
            return "focal" if chose_a == pair.a_is_focal else "comparator"

        if rule == "pooled":
            votes = {"focal": 0, "comparator": 0, "tie": 0}
            for pid, js in complete.items():
                for j in js:
                    votes[unblind(self.pairs[pid], j.choice)] += 1
            total = sum(votes.values())
            return AggregateResult(votes["focal"] / total, votes["comparator"] / total,
                                   votes["tie"] / total, len(complete))
        if rule != "majority":
            raise ValueError(f"unknown aggregation rule '{rule}'")
        wins = losses = ties = 0
        for pid, js in complete.items():
            counts = {"focal": 0, "comparator": 0, "tie": 0}
            for j in js:
                counts[unblind(self.pairs[pid], j.choice)] += 1
            if counts["focal"] >= 2:
                wins += 1
            elif counts["comparator"] >= 2:
                losses += 1
            else:
                ties += 1
        n = len(complete)
        return AggregateResult(wins / n, losses / n, ties / n, n)

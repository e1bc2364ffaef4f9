"""Search strategies over an abstract step interface.

A step function maps (state, prev_token_id) -> (log_probs over the
vocabulary, new state); strategies never see the model, which keeps them
testable against hand-built step functions and exhaustive enumeration.
Scores are raw token log-prob sums (including the EOS term when a
hypothesis finishes); beam ranking divides by the number of scored tokens
to counter the short-response bias.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class Hypothesis:
    tokens: list
    score: float
    ended_with_eos: bool

    @property
    def n_scored(self) -> int:
        return len(self.tokens) + (1 if self.ended_with_eos else 0)

    @property
    def normalized_score(self) -> float:
        return self.score / max(1, self.n_scored)


def greedy_decode(step_fn, state, bos, eos, max_len) -> Hypothesis:
    tokens, score = [], 0.0
    prev = bos
    for _ in range(max_len):
        log_probs, state = step_fn(state, prev)
        nxt = int(np.argmax(log_probs))
        score += float(log_probs[nxt])
        if nxt == eos:
            return Hypothesis(tokens, score, True)
        tokens.append(nxt)
        prev = nxt
    return Hypothesis(tokens, score, False)


def sample_decode(step_fn, state, bos, eos, max_len, temperature, rng) -> Hypothesis:
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    tokens, score = [], 0.0
    prev = bos
    for _ in range(max_len):
        log_probs, state = step_fn(state, prev)
        scaled = log_probs / temperature
        probs = np.exp(scaled - scaled.max())
        probs /= probs.sum()
        nxt = int(rng.choice(len(probs), p=probs))
        score += float(log_probs[nxt])  # untempered model log prob
        if nxt == eos:
            return Hypothesis(tokens, score, True)
        tokens.append(nxt)
        prev = nxt
    return Hypothesis(tokens, score, False)


def beam_decode(step_fn, state, bos, eos, max_len, k) -> Hypothesis:
    """Beam search expanding the top-k continuations of each live hypothesis.

    Exactly k candidates per hypothesis keeps beam(1) identical to greedy.
    EOS candidates retire to the finished pool and free their beam slot.
    """
    if k < 1:
        raise ValueError("beam width must be >= 1")
    live = [(0.0, [], bos, state)]  # (score, tokens, prev, state)
    finished: list[Hypothesis] = []
    for _ in range(max_len):
        candidates = []
        for score, tokens, prev, st in live:
            log_probs, new_st = step_fn(st, prev)
            top = np.argsort(log_probs)[::-1][:k]
            for t in top:
                candidates.append((score + float(log_probs[t]), tokens, int(t), new_st))
        next_live = []
        for cand_score, tokens, tok, st in sorted(candidates, key=lambda c: c[0], reverse=True):
            if tok == eos:
                finished.append(Hypothesis(list(tokens), cand_score, True))
            elif len(next_live) < k:
                next_live.append((cand_score, tokens + [tok], tok, st))
        live = next_live
        if not live:
            break
    pool = finished + [Hypothesis(tokens, score, False) for score, tokens, _, _ in live]
    return max(pool, key=lambda h: h.normalized_score)


def enumerate_best(step_fn, state, bos, eos, max_len, vocab_size) -> Hypothesis:
    """Exhaustive search over all sequences up to max_len (test oracle)."""
    best = None

    def visit(state, prev, tokens, score, depth):
        nonlocal best
        log_probs, new_state = step_fn(state, prev)
        for t in range(vocab_size):
            s = score + float(log_probs[t])
            if t == eos:
                h = Hypothesis(list(tokens), s, True)
                if best is None or h.normalized_score > best.normalized_score:
                    best = h
            elif depth + 1 <= max_len:
                if depth + 1 == max_len:
                    h = Hypothesis(tokens + [t], s, False)
                    if best is None or h.normalized_score > best.normalized_score:
                        best = h
                else:
                    visit(new_state, t, tokens + [t], s, depth + 1)

    visit(state, bos, [], 0.0, 0)
    return best

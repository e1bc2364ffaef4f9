"""Test-time generation: response decoding with decoder 1, backward query
inference with decoder 3, and the rolling chat session.

z comes from the prior net: its mean by default (reproducible), or one
seeded sample per request.
"""

from dataclasses import dataclass, field

import numpy as np

from . import decoding
from .corpus import BOS, EOS, SEP, Vocabulary
from .decoders import init_decoder_state, step_log_probs
from .encoders import encode_context, encode_utterance
from .latent import prior_params, reparameterize

STRATEGIES = ("greedy", "beam", "sample")
Z_MODES = ("prior-mean", "prior-sample")


@dataclass
class DecodeRequest:
    context: list  # list of token-list turns
    query: list  # token list
    strategy: str = "greedy"
    beam_width: int = 1
    temperature: float = 1.0
    z_mode: str = "prior-mean"
    max_len: int = 50
    seed: int = 0

    def validate(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy '{self.strategy}'")
        if self.z_mode not in Z_MODES:
            raise ValueError(f"unknown z-mode '{self.z_mode}'")
        if self.beam_width < 1 or self.temperature <= 0 or self.max_len < 1:
            raise ValueError("beam_width >= 1, temperature > 0, max_len >= 1 required")


@dataclass
class GenerationResult:
    tokens: list  # token strings, BOS/EOS stripped
    token_ids: list
    score: float  # sum of token log probs (EOS term included when reached)
    ended_with_eos: bool


def _ids_row(tokens, vocab, max_len):
    ids = vocab.encode(tokens[:max_len])
    arr = np.asarray([ids], dtype=np.int64)
    return arr, np.ones_like(arr, dtype=np.float32)


def _context_row(context, vocab, max_len):
    flat = []
    for i, turn in enumerate(context):
        if i > 0:
            flat.append(SEP)
        flat.extend(vocab.encode(turn[:max_len]))
    arr = np.asarray([flat], dtype=np.int64)
    return arr, np.ones_like(arr, dtype=np.float32)


def _latent_from_prior(c_vec, params, z_mode, seed):
    prior = prior_params(c_vec, params)
    if z_mode == "prior-mean":
        return prior.mu
    rng = np.random.default_rng(seed)
    return reparameterize(prior, rng).z


def _make_step_fn(decoder_id, z, params, cfg):
    def step(state, prev_id):
        log_probs, new_state = step_log_probs(
            decoder_id, state, np.asarray([prev_id], dtype=np.int64), z, params, cfg
        )
        return log_probs[0], new_state

    return step


def _run_strategy(request, conditioning, decoder_id, params, cfg):
    state = init_decoder_state(decoder_id, conditioning, params, cfg)
    step = _make_step_fn(decoder_id, conditioning[1], params, cfg)
    if request.strategy == "greedy":
        return decoding.greedy_decode(step, state, BOS, EOS, request.max_len)
    if request.strategy == "beam":
        return decoding.beam_decode(step, state, BOS, EOS, request.max_len, request.beam_width)
    rng = np.random.default_rng(np.random.SeedSequence([request.seed, 7]))
    return decoding.sample_decode(step, state, BOS, EOS, request.max_len, request.temperature, rng)


def generate_response(request: DecodeRequest, params, cfg, vocab: Vocabulary) -> GenerationResult:
    """Generate y given (c, x): encode, draw z from the prior, decode with Dec1."""
    request.validate()
    if not request.query:
        raise ValueError("empty query")
    if not request.context:
        raise ValueError("empty context")
    c_ids, c_mask = _context_row(request.context, vocab, request.max_len)
    x_ids, x_mask = _ids_row(request.query, vocab, request.max_len)
    c_vec = encode_context(c_ids, c_mask, params, cfg)
    x_vec = encode_utterance(x_ids, x_mask, params, cfg)
    z = _latent_from_prior(c_vec, params, request.z_mode, request.seed)
    hyp = _run_strategy(request, [c_vec, z, x_vec], 1, params, cfg)
    return GenerationResult(vocab.decode(hyp.tokens), hyp.tokens, hyp.score, hyp.ended_with_eos)


def backward_infer_query(context, response, params, cfg, vocab, strategy="greedy",
                         beam_width=1, temperature=1.0, z_mode="prior-mean",
                         max_len=50, seed=0) -> GenerationResult:
    """Diagnostic: infer x from (c, y) with decoder 3."""
    if not response:
        raise ValueError("empty response")
    if not context:
        raise ValueError("empty context")
    request = DecodeRequest(context=context, query=response, strategy=strategy,
                            beam_width=beam_width, temperature=temperature,
                            z_mode=z_mode, max_len=max_len, seed=seed)
    request.validate()
    c_ids, c_mask = _context_row(context, vocab, max_len)
    y_ids, y_mask = _ids_row(response, vocab, max_len)
    c_vec = encode_context(c_ids, c_mask, params, cfg)
    y_vec = encode_utterance(y_ids, y_mask, params, cfg)
    z = _latent_from_prior(c_vec, params, z_mode, seed)
    hyp = _run_strategy(request, [c_vec, z, y_vec], 3, params, cfg)
    return GenerationResult(vocab.decode(hyp.tokens), hyp.tokens, hyp.score, hyp.ended_with_eos)


@dataclass
class ChatSession:
    """Rolling-window chat state: the newest turn is the query, the preceding
    up to `context_turns` turns form the context."""

    context_turns: int = 1
    history: list = field(default_factory=list)
    checkpoint_id: str = ""

    def reset(self):
        self.history.clear()

    def window(self):
        turns = self.history[-(self.context_turns + 1):]
        query = turns[-1]
        context = turns[:-1]
        if not context:
            context = [["<bos>"]]  # placeholder so (c, x) stays well-formed
        return context, query


def chat_turn(session: ChatSession, user_utterance: list, params, cfg, vocab,
              strategy="greedy", z_mode="prior-mean", max_len=50, seed=0,
              beam_width=1, temperature=1.0) -> list:
    """Append the user turn, generate, append and return the system turn."""
    if params is None:
        raise ValueError("no checkpoint loaded")
    session.history.append(list(user_utterance))
    context, query = session.window()
    request = DecodeRequest(context=context, query=query, strategy=strategy,
                            beam_width=beam_width, temperature=temperature,
                            z_mode=z_mode, max_len=max_len, seed=seed)
    result = generate_response(request, params, cfg, vocab)
    session.history.append(list(result.tokens))
    return result.tokens

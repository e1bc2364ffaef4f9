"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` (or let the full suite pick
it up). The toy-overfit fixtures train real models and together take a few
minutes on one core.
"""

import json
import math
import time

import numpy as np
import pytest

from mirror import verify as verify_mod
from mirror.autodiff import Tensor
from mirror.cli import main as cli_main
from mirror.corpus import (
    BOS, EOS,
    Dialogue, Triple,
    build_vocabulary, encode_batch, import_dailydialog, load_jsonl_corpus,
    window_dialogues,
)
from mirror.data import builtin_corpus_path
from mirror.decoding import beam_decode, enumerate_best, greedy_decode
from mirror.evalsession import EvalSession, Judgment
from mirror.inference import backward_infer_query
from mirror.latent import GaussianParams, gaussian_kl, gaussian_kl_monte_carlo
from mirror.metrics import perplexity
from mirror.objective import TrainConfig, compute_loss, fit
from mirror.params import ModelConfig, config_for_profile, init_params, zero_output_projections

TOY_TRAIN_CONFIG = dict(mode="mirror", seed=13, batch_size=8, lr=0.005,
                        patience=10, kl_anneal_steps=0)


def _report(name, ok, detail=""):
    print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# Trained-model fixtures (shared by several criteria)


@pytest.fixture(scope="module")
def toy32():
    dialogues = load_jsonl_corpus(builtin_corpus_path("toy"))
    triples = window_dialogues(dialogues)
    vocab = build_vocabulary(triples)
    cfg = config_for_profile("desk", len(vocab))
    start = time.monotonic()
    result = fit(triples, triples, vocab, cfg,
                 TrainConfig(max_epochs=500, **TOY_TRAIN_CONFIG))
    elapsed = time.monotonic() - start
    return dict(triples=triples, vocab=vocab, cfg=cfg, result=result, elapsed=elapsed)


@pytest.fixture(scope="module")
def toy8():
    dialogues = load_jsonl_corpus(builtin_corpus_path("toy8"))
    triples = window_dialogues(dialogues)
    vocab = build_vocabulary(triples)
    cfg = config_for_profile("desk", len(vocab))
    result = fit(triples, triples, vocab, cfg,
                 TrainConfig(max_epochs=300, **TOY_TRAIN_CONFIG))
    return dict(triples=triples, vocab=vocab, cfg=cfg, result=result)


# ---------------------------------------------------------------------------


def test_gradient_soundness():
    """Every primitive and the full mirror loss pass finite differences."""
    start = time.monotonic()
    worst_primitive = max(verify_mod.check_primitives().values())
    full = verify_mod.check_full_loss(max_coords_per_param=8)
    elapsed = time.monotonic() - start
    ok = worst_primitive < 1e-4 and full < 1e-4 and elapsed < 120
    _report("gradient-soundness", ok,
            f"primitives {worst_primitive:.2e}, full loss {full:.2e}, {elapsed:.0f}s")


def test_kl_correctness():
    start = time.monotonic()

    def gauss(mu, lv):
        return GaussianParams(Tensor(np.asarray(mu, np.float64)),
                              Tensor(np.asarray(lv, np.float64)))

    # hand-derived fixtures, exact to 1e-9
    fixtures = [
        (gauss([0.3], [0.4]), gauss([0.3], [0.4]), 0.0),
        (gauss([1.0], [0.0]), gauss([0.0], [0.0]), 0.5),
        (gauss([0.2], [1.0]), gauss([0.2], [0.0]), (math.e - 2.0) / 2.0),
    ]
    fixtures_ok = all(
        abs(float(gaussian_kl(q, p).data) - expected) < 1e-9
        for q, p, expected in fixtures
    )

    rng = np.random.default_rng(0)
    worst = 0.0
    for k in range(20):
        mu_q, mu_p = rng.normal(size=4), rng.normal(size=4)
        lv_q, lv_p = rng.uniform(-1.5, 1.5, 4), rng.uniform(-1.5, 1.5, 4)
        closed = float(gaussian_kl(gauss(mu_q, lv_q), gauss(mu_p, lv_p)).data)
        mc = gaussian_kl_monte_carlo(mu_q, lv_q, mu_p, lv_p, n_samples=1_000_000,
                                     rng=np.random.default_rng(1000 + k))
        worst = max(worst, abs(closed - mc) / max(abs(closed), 1e-12))
    elapsed = time.monotonic() - start
    ok = fixtures_ok and worst < 0.01 and elapsed < 60
    _report("kl-correctness", ok,
            f"fixtures {'ok' if fixtures_ok else 'BAD'}, MC gap {worst:.4f}, {elapsed:.0f}s")


def test_objective_identity_100_settings():
    worst = max(verify_mod.mirror_identity_gap(seed=s) for s in range(100))
    _report("mirror-identity", worst < 1e-6, f"max gap {worst:.2e}")


def test_uniform_model_calibration():
    words = [f"w{i}" for i in range(20)]
    L = 6
    triples = [Triple([words[:4]], words[4:4 + L], words[8:8 + L], source=(0, 0))]
    vocab = build_vocabulary(triples)
    V = len(vocab)
    cfg = ModelConfig(vocab_size=V, embed_dim=8, hidden_dim=12, z_dim=4)
    params = init_params(cfg, np.random.default_rng(0))
    zero_output_projections(params)
    batch = encode_batch(triples, vocab)
    bd = compute_loss(batch, params, cfg, mode="mirror", kl_weight=1.0,
                      eps=np.zeros((1, cfg.z_dim)))
    expected = -(L + 1) * math.log(V)  # L tokens + EOS
    terms = dict(r_fwd_y=bd.r_fwd_y, r_fwd_x=bd.r_fwd_x,
                 r_bwd_x=bd.r_bwd_x, r_bwd_y=bd.r_bwd_y)
    terms_ok = all(abs(v - expected) / abs(expected) < 1e-4 for v in terms.values())
    ppl = perplexity(triples, params, cfg, vocab)
    ppl_ok = abs(ppl - V) / V < 1e-3
    _report("uniform-calibration", terms_ok and ppl_ok,
            f"terms within {max(abs(v - expected) / abs(expected) for v in terms.values()):.2e}, "
            f"ppl {ppl:.3f} vs V={V}")


def test_toy_overfit(toy32):
    ppl_f = perplexity(toy32["triples"], toy32["result"].params, toy32["cfg"],
                       toy32["vocab"], "forward")
    ppl_b = perplexity(toy32["triples"], toy32["result"].params, toy32["cfg"],
                       toy32["vocab"], "backward")
    ok = ppl_f < 1.2 and ppl_b < 1.5 and toy32["elapsed"] < 600
    _report("toy-overfit", ok,
            f"forward ppl {ppl_f:.3f} (<1.2), backward ppl {ppl_b:.3f} (<1.5), "
            f"{toy32['elapsed']:.0f}s (<600)")


def test_early_training_monotonicity(toy32):
    """Reconstruction losses improve over the first 5 epochs; no epoch
    regresses on the previous one by more than 5%."""
    records = toy32["result"].report[:5]
    ok = True
    for term in ("r_fwd_y", "r_fwd_x", "r_bwd_x", "r_bwd_y"):
        series = [rec.train[term] for rec in records]  # log probs, rising
        ok &= all(b >= a - 0.05 * abs(a) for a, b in zip(series, series[1:]))
    _report("early-monotonicity", ok,
            f"first-5-epoch r_fwd_y: {[round(r.train['r_fwd_y'], 1) for r in records]}")


def test_conditioning_sensitivity(toy32):
    """Trained decoder 1 prefers the gold query encoding to a shuffled one."""
    from mirror.decoders import teacher_forced_log_prob
    from mirror.encoders import encode_context, encode_utterance
    from mirror.latent import prior_params

    triples, vocab, cfg = toy32["triples"], toy32["vocab"], toy32["cfg"]
    params = toy32["result"].params
    batch = encode_batch(triples, vocab)
    c_vec = encode_context(batch.c, batch.c_mask, params, cfg)
    x_vec = encode_utterance(batch.x, batch.x_mask, params, cfg)
    z = prior_params(c_vec, params).mu
    true_total, _ = teacher_forced_log_prob(1, [c_vec, z, x_vec],
                                            batch.y_tgt, batch.y_tgt_mask, params, cfg)
    perm = np.roll(np.arange(batch.size), 1)  # every row gets a wrong x_vec
    shuffled = Tensor(x_vec.data[perm])
    wrong_total, _ = teacher_forced_log_prob(1, [c_vec, z, shuffled],
                                             batch.y_tgt, batch.y_tgt_mask, params, cfg)
    gap = float(np.mean(true_total.data - wrong_total.data))
    _report("conditioning-sensitivity", gap > 0.0,
            f"gold-vs-shuffled query mean log-prob gap {gap:.3f}")


def test_backward_reasoning_diagnostic(toy8):
    hits = 0
    for triple in toy8["triples"]:
        out = backward_infer_query(triple.context, triple.response,
                                   toy8["result"].params, toy8["cfg"], toy8["vocab"],
                                   strategy="greedy", max_len=12)
        hits += int(out.tokens == triple.query)
    _report("backward-reasoning", hits >= 6, f"{hits}/8 gold queries reproduced")


def test_memorized_toy8_perplexity(toy8):
    ppl = perplexity(toy8["triples"], toy8["result"].params, toy8["cfg"],
                     toy8["vocab"], "forward")
    assert ppl < 1.2


def test_windowing_fidelity(tmp_path):
    # synthetic D x T corpus
    count_ok = True
    for D, T in ((3, 3), (4, 5), (2, 9)):
        dialogues = [Dialogue([[f"d{d}t{t}"] for t in range(T)]) for d in range(D)]
        count_ok &= len(window_dialogues(dialogues)) == D * (T - 2)

    # DailyDialog importer vs hand-built triples, token for token
    lines, expected = [], []
    for i in range(10):
        turns = [f"hello number {i} !", f"how is turn {i} ?", f"fine reply {i} ."]
        lines.append(" __eou__ ".join(turns) + " __eou__\n")
        expected.append((
            [turns[0].split()],
            turns[1].split(),
            turns[2].split(),
        ))
    path = tmp_path / "dd.txt"
    path.write_text("".join(lines))
    triples = window_dialogues(import_dailydialog(path))
    import_ok = len(triples) == 10 and all(
        (t.context, t.query, t.response) == e for t, e in zip(triples, expected)
    )
    _report("windowing-fidelity", count_ok and import_ok,
            f"counts {'ok' if count_ok else 'BAD'}, importer {'ok' if import_ok else 'BAD'}")


def test_determinism_end_to_end(tmp_path):
    def run_all(tag):
        base = tmp_path / tag
        base.mkdir()
        prep = base / "prep"
        ckpt = base / "model.ckpt"  # same basename both runs: it lands in outputs
        report = base / "report.jsonl"
        gen = base / "gen.jsonl"
        assert cli_main(["preprocess", "--dataset", "custom", "--input", "toy",
                         "--output-dir", str(prep), "--seed", "13"]) == 0
        assert cli_main(["train", "--train", "toy", "--checkpoint", str(ckpt),
                         "--report", str(report), "--epochs", "3",
                         "--batch-size", "8", "--seed", "13"]) == 0
        assert cli_main(["generate", "--checkpoint", str(ckpt), "--test", "toy8",
                         "--output", str(gen), "--seed", "13"]) == 0
        return ((prep / "corpus.jsonl").read_bytes() + (prep / "vocab.txt").read_bytes()
                + ckpt.read_bytes() + report.read_bytes() + gen.read_bytes())

    ok = run_all("a") == run_all("b")
    _report("determinism", ok, "preprocess+train+generate byte-identical")


def test_beam_oracle():
    # two-step model: A wins step one, the B sequence wins jointly
    A, B = 5, 6
    table = {
        "start": {A: 0.5, B: 0.4, EOS: 0.1},
        A: {EOS: 0.5, A: 0.3, B: 0.2},
        B: {EOS: 0.9, A: 0.05, B: 0.05},
    }

    def step(state, prev):
        key = "start" if prev == BOS else prev
        dist = table.get(key, {EOS: 0.999})
        log_probs = np.full(8, -60.0)
        for tok, p in dist.items():
            log_probs[tok] = math.log(p)
        return log_probs, key

    best = enumerate_best(step, "start", BOS, EOS, max_len=4, vocab_size=8)
    beam = beam_decode(step, "start", BOS, EOS, max_len=4, k=2)
    greedy = greedy_decode(step, "start", BOS, EOS, max_len=4)
    ok = beam.tokens == best.tokens == [B] and greedy.tokens == [A]
    _report("beam-oracle", ok,
            f"enumeration {best.tokens}, beam(2) {beam.tokens}, greedy {greedy.tokens}")


def test_evaluation_aggregation(tmp_path):
    triples = [Triple([[f"c{i}"]], [f"q{i}"], [f"g{i}"], source=(i, 0)) for i in range(12)]
    outputs = lambda prefix: {
        i: {"dialogue_index": i, "response_text": f"{prefix}{i}",
            "decode_strategy": "greedy", "checkpoint_id": prefix}
        for i in range(12)
    }
    session = EvalSession.create(triples, outputs("focal"), outputs("comp"),
                                 session_dir=str(tmp_path / "agg"), n_pairs=10, seed=4)
    script = ["win", "win", "win", "loss", "loss", "tie", "tie", "tie", "tie", "tie"]
    for pid, outcome in zip(session.pair_order, script):
        pair = session.pairs[pid]
        focal, comp = ("A", "B") if pair.a_is_focal else ("B", "A")
        if outcome == "win":
            votes = [focal, focal, comp]
        elif outcome == "loss":
            votes = [comp, comp, focal]
        else:
            votes = [focal, comp, "tie"]
        for i, choice in enumerate(votes):
            session.record(Judgment(pid, f"ann{i}", choice))
    result = session.aggregate()
    exact = (result.wins, result.losses, result.ties) == (0.3, 0.2, 0.5)
    sums_ok = abs(result.wins + result.losses + result.ties - 1.0) < 1e-9
    pooled = session.aggregate("pooled")
    pooled_sum_ok = abs(pooled.wins + pooled.losses + pooled.ties - 1.0) < 1e-9
    _report("evaluation-aggregation", exact and sums_ok and pooled_sum_ok,
            f"wins/losses/ties {result.wins}/{result.losses}/{result.ties}")


def test_service_protocol(tmp_path):
    """Scripted HTTP client: 5 pairs, 3 annotators, duplicate 409s, replay."""
    import threading
    import urllib.request
    import urllib.error

    from mirror.server import make_server

    triples = [Triple([[f"c{i}"]], [f"q{i}"], [f"g{i}"], source=(i, 0)) for i in range(8)]
    outputs = lambda prefix: {
        i: {"dialogue_index": i, "response_text": f"{prefix}{i}",
            "decode_strategy": "greedy", "checkpoint_id": prefix}
        for i in range(8)
    }
    EvalSession.create(triples, outputs("focal"), outputs("comp"),
                       session_dir=str(tmp_path / "svc"), n_pairs=5, seed=9,
                       session_id="svc")
    server = make_server(str(tmp_path), port=0)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    base = f"http://127.0.0.1:{server.server_address[1]}"

    def get(path):
        try:
            with urllib.request.urlopen(base + path) as resp:
                body = resp.read()
                return resp.status, json.loads(body) if body else None
        except urllib.error.HTTPError as err:
            return err.code, json.loads(err.read() or b"{}")

    def post(path, payload):
        req = urllib.request.Request(base + path, data=json.dumps(payload).encode(),
                                     method="POST")
        try:
            with urllib.request.urlopen(req) as resp:
                return resp.status, json.loads(resp.read() or b"{}")
        except urllib.error.HTTPError as err:
            return err.code, json.loads(err.read() or b"{}")

    try:
        duplicates_ok = True
        for annotator in ("ann1", "ann2", "ann3"):
            while True:
                status, pair = get(f"/api/session/svc/next-pair?annotator={annotator}")
                if status == 204:
                    break
                status, _ = post("/api/session/svc/judgment",
                                 {"pair_id": pair["pair_id"], "annotator": annotator,
                                  "choice": "A"})
                duplicates_ok &= status == 201
                status, body = post("/api/session/svc/judgment",
                                    {"pair_id": pair["pair_id"], "annotator": annotator,
                                     "choice": "B"})
                duplicates_ok &= status == 409 and body["error"] == "duplicate_judgment"
        status, results = get("/api/session/svc/results")
        complete_ok = status == 200 and results["completion"]["completed_pairs"] == 5
        replayed = EvalSession.load(str(tmp_path / "svc"))
        replay_ok = (replayed.aggregate().as_dict() == results["majority"]
                     and replayed.aggregate("pooled").as_dict() == results["pooled"])
    finally:
        server.shutdown()
        server.server_close()
    _report("service-protocol", duplicates_ok and complete_ok and replay_ok,
            f"duplicates {'ok' if duplicates_ok else 'BAD'}, "
            f"replay {'ok' if replay_ok else 'BAD'}")

"""Training losses and the training loop.

Four loss modes share one architecture:
  mirror   : 0.5*(r_fwd_y + r_fwd_x + r_bwd_x + r_bwd_y) - w*kl
  forward  : r_fwd_y + r_fwd_x - w*kl
  backward : r_bwd_x + r_bwd_y - w*kl
  cvae     : r_fwd_y - w*kl          (posterior still q(z|c,x,y))
where r_* are per-sequence token log-likelihood sums averaged over the
batch, kl is the batch-mean posterior/prior KL, and w is the annealing
weight. The objective is maximized; the trainer minimizes its negation.
"""

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, Tape
from .corpus import encode_batch
from .decoders import teacher_forced_log_prob
from .encoders import encode_context, encode_utterance
from .latent import gaussian_kl, posterior_params, prior_params, reparameterize
from .optim import AdamState, adam_step, clip_global_norm
from .checkpoint import save_checkpoint

MODES = ("mirror", "forward", "backward", "cvae")


@dataclass
class LossBreakdown:
    kl: float
    combined: float
    r_fwd_y: float | None = None
    r_fwd_x: float | None = None
    r_bwd_x: float | None = None
    r_bwd_y: float | None = None
    tokens_fwd_y: int = 0
    tokens_fwd_x: int = 0
    tokens_bwd_x: int = 0
    tokens_bwd_y: int = 0
    objective: Tensor | None = None  # graph output; excluded from reports

    def to_dict(self):
        d = asdict(self)
        d.pop("objective")
        return d


@dataclass
class TrainConfig:
    mode: str = "mirror"
    lr: float = 0.001
    lr_decay: float = 0.5
    patience: int = 1
    kl_anneal_steps: int = 10000
    batch_size: int = 32
    max_epochs: int = 20
    seed: int = 13
    profile: str = "desk"
    max_len: int = 50
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got '{self.mode}'")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.kl_anneal_steps < 0:
            raise ValueError("kl_anneal_steps must be >= 0")


def kl_anneal_weight(step: int, ramp: int) -> float:
    """Linear ramp min(1, step/ramp); ramp 0 means a constant weight of 1."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if ramp == 0:
        return 1.0
    return min(1.0, step / ramp)


def compute_loss(batch, params, cfg, mode="mirror", kl_weight=1.0, rng=None,
                 eps=None, use_posterior_mean=False) -> LossBreakdown:
    """Forward pass for one batch; one z per triple.

    `eps` injects the reparameterization noise (shared-z comparisons across
    modes); `use_posterior_mean` sets z = posterior mean (validation).
    """
    if mode not in MODES:
        raise ValueError(f"unknown loss mode '{mode}'")
    if not 0.0 <= kl_weight <= 1.0:
        raise ValueError("kl_weight must lie in [0, 1]")
    B = batch.size
    c_vec = encode_context(batch.c, batch.c_mask, params, cfg)
    x_vec = encode_utterance(batch.x, batch.x_mask, params, cfg)
    y_vec = encode_utterance(batch.y, batch.y_mask, params, cfg)
    q = posterior_params(c_vec, x_vec, y_vec, params)
    p = prior_params(c_vec, params)
    if use_posterior_mean:
        z = q.mu
    else:
        sample = reparameterize(q, rng, eps=eps)
        z = sample.z

    kl_rows = gaussian_kl(q, p)
    kl_mean = ad.mul(ad.tsum(kl_rows), 1.0 / B)

    def recon(decoder_id, conditioning, target, mask):
        total, _ = teacher_forced_log_prob(decoder_id, conditioning, target, mask, params, cfg)
        return ad.mul(ad.tsum(total), 1.0 / B)

    bd = LossBreakdown(kl=float(kl_mean.data), combined=0.0)
    terms = {}
    if mode in ("mirror", "forward", "cvae"):
        terms["r_fwd_y"] = recon(1, [c_vec, z, x_vec], batch.y_tgt, batch.y_tgt_mask)
        bd.tokens_fwd_y = int(batch.y_tgt_mask[:, 1:].sum())
    if mode in ("mirror", "forward"):
        terms["r_fwd_x"] = recon(2, [c_vec, z], batch.x_tgt, batch.x_tgt_mask)
        bd.tokens_fwd_x = int(batch.x_tgt_mask[:, 1:].sum())
    if mode in ("mirror", "backward"):
        terms["r_bwd_x"] = recon(3, [c_vec, z, y_vec], batch.x_tgt, batch.x_tgt_mask)
        bd.tokens_bwd_x = int(batch.x_tgt_mask[:, 1:].sum())
        terms["r_bwd_y"] = recon(4, [c_vec, z], batch.y_tgt, batch.y_tgt_mask)
        bd.tokens_bwd_y = int(batch.y_tgt_mask[:, 1:].sum())
    for name, tensor in terms.items():
        setattr(bd, name, float(tensor.data))

    weighted_kl = ad.mul(kl_mean, kl_weight)
    if mode == "mirror":
        recon_sum = ad.add(ad.add(terms["r_fwd_y"], terms["r_fwd_x"]),
                           ad.add(terms["r_bwd_x"], terms["r_bwd_y"]))
        objective = ad.sub(ad.mul(recon_sum, 0.5), weighted_kl)
    elif mode == "forward":
        objective = ad.sub(ad.add(terms["r_fwd_y"], terms["r_fwd_x"]), weighted_kl)
    elif mode == "backward":
        objective = ad.sub(ad.add(terms["r_bwd_x"], terms["r_bwd_y"]), weighted_kl)
    else:  # cvae
        objective = ad.sub(terms["r_fwd_y"], weighted_kl)
    bd.objective = objective

    # report the combined value in float64 over the term values so algebraic
    # identities between modes hold to ~1e-12 regardless of training dtype
    r_values = [float(t.data) for t in terms.values()]
    if mode == "mirror":
        bd.combined = 0.5 * sum(r_values) - kl_weight * bd.kl
    else:
        bd.combined = sum(r_values) - kl_weight * bd.kl

    if not math.isfinite(bd.combined) or not np.isfinite(objective.data):
        raise FloatingPointError(
            "non-finite loss: "
            + ", ".join(f"{k}={float(v.data):.6g}" for k, v in terms.items())
            + f", kl={bd.kl:.6g}"
        )
    return bd


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    kl_weight: float
    train: dict
    valid: dict

    def to_json(self):
        return json.dumps(
            {"epoch": self.epoch, "lr": self.lr, "kl_weight": self.kl_weight,
             "train": self.train, "valid": self.valid},
            sort_keys=True,
        )


@dataclass
class FitResult:
    params: dict
    report: list
    best_epoch: int
    best_valid_loss: float
    diverged: bool = False


def _average_breakdowns(breakdowns, sizes):
    """Size-weighted average of per-batch LossBreakdown dicts."""
    total = sum(sizes)
    keys = ("kl", "combined", "r_fwd_y", "r_fwd_x", "r_bwd_x", "r_bwd_y")
    out = {}
    for key in keys:
        vals = [(getattr(b, key), n) for b, n in zip(breakdowns, sizes)]
        if any(v is None for v, _ in vals):
            out[key] = None
        else:
            out[key] = sum(v * n for v, n in vals) / total
    for key in ("tokens_fwd_y", "tokens_fwd_x", "tokens_bwd_x", "tokens_bwd_y"):
        out[key] = sum(getattr(b, key) for b in breakdowns)
    return out


def _make_batches(triples, order, batch_size, vocab, max_len):
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        yield encode_batch([triples[i] for i in idx], vocab, max_len)


def evaluate_loss(triples, params, cfg, vocab, mode, batch_size=32, max_len=50):
    """Deterministic validation pass: kl_weight=1, z = posterior mean."""
    breakdowns, sizes = [], []
    for batch in _make_batches(triples, range(len(triples)), batch_size, vocab, max_len):
        bd = compute_loss(batch, params, cfg, mode=mode, kl_weight=1.0, use_posterior_mean=True)
        breakdowns.append(bd)
        sizes.append(batch.size)
    return _average_breakdowns(breakdowns, sizes)


def fit(train_triples, valid_triples, vocab, cfg, tc: TrainConfig,
        checkpoint_path=None, report_path=None, log=None) -> FitResult:
    """Epoch loop with seeded shuffling, KL annealing, lr decay on plateau,
    and best-checkpoint retention. Aborts on divergence, keeping the last
    good parameters."""
    if not train_triples or not valid_triples:
        raise ValueError("train and validation sets must be non-empty")
    seeds = np.random.SeedSequence(tc.seed).spawn(3)
    init_rng = np.random.default_rng(seeds[0])
    shuffle_rng = np.random.default_rng(seeds[1])
    eps_rng = np.random.default_rng(seeds[2])

    from .params import init_params  # local import to avoid cycle at module load
    params = init_params(cfg, init_rng)
    state = AdamState(lr=tc.lr)
    report: list[EpochRecord] = []
    # "last good" fallback if divergence strikes before any validation pass
    best = {"loss": math.inf, "epoch": -1,
            "params": {n: Tensor(t.data.copy()) for n, t in params.items()}}
    since_improve = 0
    step = 0
    diverged = False

    report_file = open(report_path, "w", encoding="utf-8") if report_path else None
    try:
        for epoch in range(tc.max_epochs):
            order = shuffle_rng.permutation(len(train_triples))
            epoch_bds, epoch_sizes = [], []
            kl_w = kl_anneal_weight(step, tc.kl_anneal_steps)
            try:
                for batch in _make_batches(train_triples, order, tc.batch_size, vocab, tc.max_len):
                    kl_w = kl_anneal_weight(step, tc.kl_anneal_steps)
                    with Tape() as tape:
                        tape.watch_all(params)
                        bd = compute_loss(batch, params, cfg, mode=tc.mode,
                                          kl_weight=kl_w, rng=eps_rng)
                        loss = ad.mul(bd.objective, -1.0)
                    grads = ad.backward_gradients(loss, tape)
                    clip_global_norm(grads, tc.clip_norm)
                    adam_step(params, grads, state)
                    step += 1
                    epoch_bds.append(bd)
                    epoch_sizes.append(batch.size)
                valid = evaluate_loss(valid_triples, params, cfg, vocab, tc.mode,
                                      tc.batch_size, tc.max_len)
                valid_loss = -valid["combined"]
                if not math.isfinite(valid_loss):
                    raise FloatingPointError("validation loss is not finite")
            except FloatingPointError as err:
                diverged = True
                if log:
                    log(f"divergence at epoch {epoch}: {err}")
                break

            train = _average_breakdowns(epoch_bds, epoch_sizes)
            rec = EpochRecord(epoch=epoch, lr=state.lr, kl_weight=kl_w,
                              train=train, valid=valid)
            report.append(rec)
            if report_file:
                report_file.write(rec.to_json() + "\n")
            if log:
                log(f"epoch {epoch}: train={train['combined']:.4f} "
                    f"valid={valid['combined']:.4f} kl={valid['kl']:.4f} lr={state.lr:.2e}")

            if valid_loss < best["loss"] - 1e-12:
                best.update(loss=valid_loss, epoch=epoch,
                            params={n: Tensor(t.data.copy()) for n, t in params.items()})
                since_improve = 0
            else:
                since_improve += 1
                if since_improve >= tc.patience:
                    state.lr *= tc.lr_decay
                    since_improve = 0
    finally:
        if report_file:
            report_file.close()

    params = best["params"]
    for t in params.values():
        t.requires_grad = False
    if checkpoint_path:
        save_checkpoint(checkpoint_path, params, cfg, vocab,
                        meta={"mode": tc.mode, "profile": tc.profile, "seed": tc.seed,
                              "best_epoch": best["epoch"]})
    return FitResult(params=params, report=report, best_epoch=best["epoch"],
                     best_valid_loss=best["loss"], diverged=diverged)

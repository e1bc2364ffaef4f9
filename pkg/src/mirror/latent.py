"""The shared latent bridge: posterior and prior Gaussians over z,
reparameterized sampling, and closed-form KL divergence.

Both nets are single-hidden-layer feed-forward maps (hidden 2*z_dim, tanh)
emitting a mean and a log-variance; log-variance keeps sigma^2 positive
without clamping the density itself. The closed form is cross-checked by an
independent Monte Carlo estimator (gaussian_kl_monte_carlo).
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

LOG_VAR_RANGE = 10.0  # log-variance clamped to [-10, 10] before exponentiation


@dataclass
class GaussianParams:
    mu: Tensor
    log_var: Tensor


@dataclass
class LatentSample:
    z: Tensor
    eps: np.ndarray


def _gaussian_head(inp, params, net):
    hidden = ad.tanh(ad.add(ad.matmul(inp, params[f"{net}.w1"]), params[f"{net}.b1"]))
    out = ad.add(ad.matmul(hidden, params[f"{net}.w2"]), params[f"{net}.b2"])
    z_dim = out.shape[-1] // 2
    mu = ad.narrow(out, out.data.ndim - 1, 0, z_dim)
    log_var = ad.clip(ad.narrow(out, out.data.ndim - 1, z_dim, z_dim), -LOG_VAR_RANGE, LOG_VAR_RANGE)
    return GaussianParams(mu, log_var)


def posterior_params(c_vec, x_vec, y_vec, params) -> GaussianParams:
    """Recognition net q(z | c, x, y) from the three summary vectors."""
    return _gaussian_head(ad.concat([c_vec, x_vec, y_vec], axis=-1), params, "post")


def prior_params(c_vec, params) -> GaussianParams:
    """Prior net p(z | c); the test-time source of z."""
    return _gaussian_head(c_vec, params, "prior")


def reparameterize(gauss: GaussianParams, rng, eps=None) -> LatentSample:
    """z = mu + exp(0.5 * log_var) * eps with eps ~ N(0, I)."""
    if eps is None:
        eps = rng.standard_normal(gauss.mu.shape)
    eps = np.asarray(eps, dtype=gauss.mu.dtype)
    sigma = ad.exp(ad.mul(gauss.log_var, 0.5))
    z = ad.add(gauss.mu, ad.mul(sigma, Tensor(eps)))
    return LatentSample(z, eps)


def gaussian_kl(q: GaussianParams, p: GaussianParams) -> Tensor:
    """KL(q || p) for diagonal Gaussians, summed over the latent axis.

    0.5 * sum_i [ log(var_p/var_q) + (var_q + (mu_q - mu_p)^2) / var_p - 1 ]
    """
    if q.mu.shape != p.mu.shape or q.log_var.shape != p.log_var.shape:
        raise ValueError("posterior/prior dimension mismatch")
    log_ratio = ad.sub(p.log_var, q.log_var)
    var_ratio = ad.exp(ad.sub(q.log_var, p.log_var))
    diff = ad.sub(q.mu, p.mu)
    mahal = ad.mul(ad.mul(diff, diff), ad.exp(ad.mul(p.log_var, -1.0)))
    inner = ad.sub(ad.add(ad.add(log_ratio, var_ratio), mahal), 1.0)
    return ad.mul(ad.tsum(inner, axis=-1), 0.5)


def gaussian_kl_monte_carlo(mu_q, log_var_q, mu_p, log_var_p, n_samples=1_000_000, rng=None):
    """Independent estimate of E_q[log q(z) - log p(z)] by direct sampling."""
    if rng is None:
        rng = np.random.default_rng(0)
    mu_q = np.atleast_1d(np.asarray(mu_q, dtype=np.float64))
    mu_p = np.atleast_1d(np.asarray(mu_p, dtype=np.float64))
    log_var_q = np.atleast_1d(np.asarray(log_var_q, dtype=np.float64))
    log_var_p = np.atleast_1d(np.asarray(log_var_p, dtype=np.float64))
    sd_q = np.exp(0.5 * log_var_q)
    z = mu_q + sd_q * rng.standard_normal((n_samples, mu_q.shape[-1]))

    def log_density(z, mu, log_var):
        return -0.5 * np.sum(
            (z - mu) ** 2 / np.exp(log_var) + log_var + np.log(2.0 * np.pi), axis=-1
        )

    return float(np.mean(log_density(z, mu_q, log_var_q) - log_density(z, mu_p, log_var_p)))

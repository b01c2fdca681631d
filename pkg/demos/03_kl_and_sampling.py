#!/usr/bin/env python3
# Diagonal-Gaussian machinery: reparameterized sampling and closed-form KL
# cross-checked against a Monte-Carlo estimate.

import numpy as np

from csrr.nn import GaussianParams, gaussian_kl, gaussian_sample

rng = np.random.default_rng(0)

# reparameterization: z = mu + sigma * eps keeps z differentiable in (mu, sigma)
mu = np.array([0.5, -1.0, 2.0])
sigma = np.array([0.3, 1.0, 2.5])
eps = rng.standard_normal((100_000, 3))
z = gaussian_sample(GaussianParams(mu=np.tile(mu, (len(eps), 1)), sigma=np.tile(sigma, (len(eps), 1))), eps).data
print("sample mean   ", np.round(z.mean(axis=0), 3), "target", mu)
print("sample stddev ", np.round(z.std(axis=0), 3), "target", sigma)

# closed-form KL vs Monte-Carlo E_q[log q - log p]
q = GaussianParams(mu=np.array([0.8, -0.2]), sigma=np.array([0.7, 1.3]))
p = GaussianParams(mu=np.array([0.0, 0.0]), sigma=np.array([1.0, 1.0]))
closed = float(gaussian_kl(q, p).data)

draws = q.mu.data + q.sigma.data * rng.standard_normal((1_000_000, 2))
log_q = -0.5 * np.sum(((draws - q.mu.data) / q.sigma.data) ** 2 + np.log(2 * np.pi * q.sigma.data**2), axis=1)
log_p = -0.5 * np.sum(((draws - p.mu.data) / p.sigma.data) ** 2 + np.log(2 * np.pi * p.sigma.data**2), axis=1)
mc = float(np.mean(log_q - log_p))

print(f"\nKL(q || N(0,I)) closed form: {closed:.6f}")
print(f"Monte-Carlo (10^6 draws):    {mc:.6f}")
print(f"difference:                  {abs(closed - mc):.2e}")

# the textbook 1-D case: q = N(0, 2), p = N(0, 1)
one_d = gaussian_kl(GaussianParams(mu=np.zeros(1), sigma=np.array([2.0])),
                    GaussianParams(mu=np.zeros(1), sigma=np.ones(1)))
print(f"\n1-D check, sigma 2 vs 1: {float(one_d.data):.6f} (expected 0.5*(4 - 1 - ln 4) = 0.806853)")

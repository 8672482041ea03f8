"""Independent reference solvers shared by unit and acceptance tests."""
import numpy as np
from scipy.optimize import minimize

from reludae.closed_form import lae_objective


def lae_descent(Xk, p_k, noise_weight, lambda_prime, restarts=8, seed=0):
    """Best untied LAE objective found by L-BFGS from random starts."""
    d = Xk.shape[0]
    rng = np.random.default_rng(seed)
    scale = np.sqrt(np.linalg.norm(Xk, 2) / max(1.0, np.linalg.norm(Xk, 2))) / np.sqrt(d)

    def fun(theta):
        W1 = theta[: d * p_k].reshape(d, p_k)
        W2 = theta[d * p_k :].reshape(d, p_k)
        A = W2 @ W1.T
        R = A @ Xk - Xk
        dA = 2.0 * R @ Xk.T + 2.0 * noise_weight * A
        g1 = dA.T @ W2 + 2.0 * lambda_prime * W1
        g2 = dA @ W1 + 2.0 * lambda_prime * W2
        val = np.sum(R * R) + noise_weight * np.sum(A * A) + lambda_prime * (np.sum(W1 * W1) + np.sum(W2 * W2))
        return val, np.concatenate([g1.ravel(), g2.ravel()])

    best = np.inf
    for _ in range(restarts):
        theta0 = scale * rng.standard_normal(2 * d * p_k)
        res = minimize(fun, theta0, jac=True, method="L-BFGS-B", options={"maxiter": 5000, "gtol": 1e-12, "ftol": 1e-15})
        best = min(best, res.fun)
    return best


def lae_random_candidates(Xk, p_k, noise_weight, lambda_prime, count=500, seed=0):
    """Best objective over random untied candidates at a few scales."""
    d = Xk.shape[0]
    rng = np.random.default_rng(seed)
    best = np.inf
    for i in range(count):
        s = 10.0 ** rng.uniform(-2, 0.5)
        W1, W2 = s * rng.standard_normal((d, p_k)), s * rng.standard_normal((d, p_k))
        best = min(best, lae_objective(W1, W2, Xk, noise_weight, lambda_prime))
    return best


def random_lae_instance(rng):
    d = int(rng.integers(2, 9))
    n_k = int(rng.integers(2, 7))
    p_k = int(rng.integers(1, min(3, d, n_k) + 1))
    Xk = rng.standard_normal((d, n_k)) * rng.uniform(0.5, 3.0)
    gram = np.sort(np.linalg.svd(Xk, compute_uv=False) ** 2)[::-1]
    noise_weight = n_k * rng.uniform(0.01, 1.0) ** 2
    lambda_prime = rng.uniform(0.0, 0.5) * gram[p_k - 1]
    return Xk, p_k, noise_weight, lambda_prime

"""Model-based reference algorithms: LS channel estimation, ZF / LMMSE
detection, eigen-ZF and WMMSE precoding. All linear algebra in 64-bit."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .phytasks import PilotObservation, sum_rate


@dataclass
class WmmseState:
    v: np.ndarray                 # (N_t, K) precoders
    u: np.ndarray                 # (K,) receive scalars
    w: np.ndarray                 # (K,) positive weights
    mu: float                     # dual variable >= 0
    rate_trace: np.ndarray        # per-iteration sum rate


def ls_estimate(obs: PilotObservation) -> np.ndarray:
    """Minimum-norm least squares per subcarrier: W_s^H (W_s W_s^H)^-1 Y_p.

    With distinct standard-basis selection rows this copies the observed
    antenna rows and leaves the rest zero.
    """
    w_s = obs.w_s.astype(np.complex128)
    gram = w_s @ w_s.conj().T
    x = np.linalg.solve(gram, obs.y_pilot)
    return w_s.conj().T @ x


def zf_detect(h: np.ndarray, y: np.ndarray) -> np.ndarray:
    """x_hat = (H^H H)^-1 H^H y; raises LinAlgError on singular systems."""
    gram = h.conj().T @ h
    return np.linalg.solve(gram, h.conj().T @ y)


def lmmse_detect(h: np.ndarray, y: np.ndarray, sigma2: float) -> np.ndarray:
    """x_hat = (H^H H + sigma2 I)^-1 H^H y."""
    k = h.shape[1]
    gram = h.conj().T @ h + sigma2 * np.eye(k)
    return np.linalg.solve(gram, h.conj().T @ y)


def zf_precode(h: np.ndarray, p_max: float) -> np.ndarray:
    """Channel-inversion zero forcing with equal per-user power.

    Columns of the pseudo-inverse are rescaled so each user gets
    p_max / K and the total power meets the budget exactly.
    """
    n_t, k = h.shape
    w0 = h @ np.linalg.inv(h.conj().T @ h)
    norms = np.linalg.norm(w0, axis=0)
    if np.any(norms == 0):
        raise np.linalg.LinAlgError("rank-deficient channel")
    return w0 * (np.sqrt(p_max / k) / norms)[None, :]


def _wmmse_v_update(h, u, w, p_max, power_tol=1e-10):
    """Solve V = (sum_k w_k |u_k|^2 h_k h_k^H + mu I)^-1 B with mu >= 0
    chosen by bisection so total power meets p_max.

    Uses the eigendecomposition of the Hermitian system matrix so the power
    as a function of mu is closed-form and the bisection is cheap and tight.
    """
    scale = w * np.abs(u) ** 2
    a = (h * scale[None, :]) @ h.conj().T
    b = h * (w * np.conj(u))[None, :]
    lam, q = np.linalg.eigh(a)
    lam = np.clip(lam, 0.0, None)
    c = q.conj().T @ b                       # (N_t, K)
    c2 = np.abs(c) ** 2

    def power(mu):
        return float(np.sum(c2 / (lam[:, None] + mu) ** 2))

    full_rank = lam.min() > 1e-12 * max(lam.max(), 1e-30)
    if full_rank and power(0.0) <= p_max:
        mu = 0.0
    else:
        mu_lo, mu_hi = 0.0, 1.0
        while power(mu_hi) > p_max and mu_hi < 1e18:
            mu_hi *= 2.0
        mu = mu_hi
        for _ in range(300):
            mid = 0.5 * (mu_lo + mu_hi)
            p = power(mid)
            if p > p_max:
                mu_lo = mid
            else:
                mu_hi = mid
                mu = mid
            if abs(p - p_max) <= power_tol:
                mu = mid if p <= p_max + power_tol else mu_hi
                break
            if (mu_hi - mu_lo) < 1e-16 * max(mu_hi, 1.0):
                break
    v = q @ (c / (lam[:, None] + mu)) if mu > 0 else q @ (c / lam[:, None])
    return v, float(mu)


def _wmmse_loop(h, p_max, sigma2, iters, tol):
    n_t, k = h.shape
    try:
        v = zf_precode(h, p_max)
    except np.linalg.LinAlgError:
        norms = np.linalg.norm(h, axis=0)
        v = h / np.where(norms == 0, 1.0, norms)[None, :] * np.sqrt(p_max / k)

    trace = [sum_rate(h, v, sigma2)]
    best_v, best_rate = v, trace[0]
    mu = 0.0
    u = np.zeros(k, dtype=np.complex128)
    w = np.ones(k)
    for _ in range(iters):
        a = h.conj().T @ v                       # a[k, j] = h_k^H v_j
        denom = np.sum(np.abs(a) ** 2, axis=1) + sigma2
        u = np.diag(a) / denom
        e = 1.0 - np.abs(np.diag(a)) ** 2 / denom
        e = np.maximum(e, 1e-300)
        w = 1.0 / e
        v, mu = _wmmse_v_update(h, u, w, p_max)
        rate = sum_rate(h, v, sigma2)
        trace.append(rate)
        if rate > best_rate:
            best_rate, best_v = rate, v
        if trace[-1] - trace[-2] < tol:
            break
    return best_v, np.array(trace), u, w, mu


def wmmse_precode(h: np.ndarray, p_max: float, sigma2: float,
                  iters: int = 100, tol: float = 1e-10) -> tuple:
    """Weighted-MMSE alternating maximization of the sum rate.

    Initialized from the zero-forcing precoder when the channel has full
    column rank (matched filter otherwise), so the first trace entry is the
    ZF rate and monotonicity guarantees the result never falls below it.
    Returns (W, rate_trace) with W the best iterate.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    v, trace, _, _, _ = _wmmse_loop(h, p_max, sigma2, iters, tol)
    return v, trace


def wmmse_state(h: np.ndarray, p_max: float, sigma2: float,
                iters: int = 100, tol: float = 1e-10) -> WmmseState:
    """Like wmmse_precode but returning the full terminal state."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    v, trace, u, w, mu = _wmmse_loop(h, p_max, sigma2, iters, tol)
    return WmmseState(v=v, u=u, w=w, mu=mu, rate_trace=trace)

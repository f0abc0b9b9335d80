"""Per-task sample synthesis for the five physical-layer tasks and their
evaluation metrics.

Tasks: channel estimation (pilot observations), MIMO detection (QPSK
uplink), multi-user precoding (noisy CSI + sum rate), channel decoding
(polar-coded BPSK with syndrome pre-processing and multiplicative-noise
targets), and user localization (pilot observation -> normalized position).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import awgn, snr_to_sigma2

TASKS = ("ce", "det", "precoding", "decoding", "loc")

QPSK = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0)


# ---------------------------------------------------------------------------
# sample containers
# ---------------------------------------------------------------------------

@dataclass
class PilotObservation:
    y_pilot: np.ndarray       # (L_p, M) complex
    selection: np.ndarray     # (L_p,) distinct antenna indices
    n_t: int
    snr_db: float
    user_index: int = 0

    @property
    def w_s(self) -> np.ndarray:
        """Selection matrix with distinct standard-basis rows, (L_p, N_t)."""
        w = np.zeros((len(self.selection), self.n_t))
        w[np.arange(len(self.selection)), self.selection] = 1.0
        return w


@dataclass
class DetectionSample:
    h: np.ndarray             # (N_t, K) complex
    y: np.ndarray             # (N_t, L_d) complex
    x: np.ndarray             # (K, L_d) complex QPSK
    snr_db: float
    subcarrier: int = 0


@dataclass
class PrecodingSample:
    h_true: np.ndarray        # (N_t, K) complex
    h_noisy: np.ndarray       # (N_t, K) complex CSI input
    sigma2: float             # receiver noise variance for the rate
    p_max: float


@dataclass
class DecodingSample:
    bits: np.ndarray          # (m,) information bits
    codeword: np.ndarray      # (n,) coded bits
    s_bpsk: np.ndarray        # (n,) in {+-1}
    s_hat: np.ndarray         # (n,) real received soft values
    s_tilde: np.ndarray       # (2n-m,) = [|s_hat|, syndrome]
    z_tilde: np.ndarray       # (n,) binary multiplicative-noise target
    ebn0_db: float


@dataclass
class LocalizationSample:
    y_pilot: np.ndarray       # (L_p, M) complex
    pos: np.ndarray           # (2,) in [0, 1]^2
    snr_db: float


# ---------------------------------------------------------------------------
# pilot / detection synthesis
# ---------------------------------------------------------------------------

def pilot_selection(n_t: int, l_p: int, mode: str = "even", seed=None) -> np.ndarray:
    """Evenly spaced antenna indices floor(i*N_t/L_p); a seeded random
    subset is available behind mode="random"."""
    if not 1 <= l_p <= n_t:
        raise ValueError(f"pilot length {l_p} outside [1, {n_t}]")
    if mode == "even":
        return (np.arange(l_p) * n_t // l_p).astype(np.int64)
    if mode == "random":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(np.uint64(seed))
        return np.sort(rng.choice(n_t, size=l_p, replace=False)).astype(np.int64)
    raise ValueError(f"unknown selection mode {mode!r}")


def make_pilot_obs(h_k: np.ndarray, l_p: int, snr_db: float, seed,
                   mode: str = "even", user_index: int = 0) -> PilotObservation:
    """Y_p = W_s H_k + N with noise level set against unit-normalized
    channel power."""
    n_t, n_sub = h_k.shape
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(np.uint64(seed))
    sel = pilot_selection(n_t, l_p, mode=mode, seed=rng)
    sigma2 = snr_to_sigma2(snr_db)
    noise = awgn((l_p, n_sub), sigma2, rng)
    return PilotObservation(y_pilot=h_k[sel] + noise, selection=sel,
                            n_t=n_t, snr_db=snr_db, user_index=user_index)


def draw_qpsk(shape, rng: np.random.Generator) -> np.ndarray:
    return QPSK[rng.integers(0, 4, size=shape)]


def make_detection_sample(h_m: np.ndarray, l_d: int, snr_db: float, seed,
                          subcarrier: int = 0) -> DetectionSample:
    """Uplink block Y = H X + N with unit-power QPSK symbols."""
    n_t, k = h_m.shape
    if k > n_t:
        raise ValueError("more users than antennas")
    rng = np.random.default_rng(np.uint64(seed))
    x = draw_qpsk((k, l_d), rng)
    sigma2 = snr_to_sigma2(snr_db)
    y = h_m @ x + awgn((n_t, l_d), sigma2, rng)
    return DetectionSample(h=h_m, y=y, x=x, snr_db=snr_db, subcarrier=subcarrier)


# ---------------------------------------------------------------------------
# polar coding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolarCode:
    n: int
    m: int
    frozen: tuple

    def __post_init__(self):
        if self.n & (self.n - 1) or self.n < 2:
            raise ValueError("n must be a power of two >= 2")
        if len(self.frozen) != self.n - self.m:
            raise ValueError("|frozen| must equal n - m")
        if len(set(self.frozen)) != len(self.frozen):
            raise ValueError("frozen indices must be distinct")

    @property
    def info(self) -> tuple:
        frozen = set(self.frozen)
        return tuple(i for i in range(self.n) if i not in frozen)

    @property
    def rate(self) -> float:
        return self.m / self.n


def polar_generator(n: int) -> np.ndarray:
    """G_n = F^{kron log2 n} with F = [[1,0],[1,1]], self-inverse mod 2."""
    f = np.array([[1, 0], [1, 1]], dtype=np.uint8)
    g = np.array([[1]], dtype=np.uint8)
    k = int(np.log2(n))
    if 2 ** k != n:
        raise ValueError("n must be a power of two")
    for _ in range(k):
        g = np.kron(f, g)
    return g


def bhattacharyya_frozen_set(n: int, m: int, design_ebn0_db: float = 5.0) -> tuple:
    """Frozen set = (n - m) synthetic channels with the largest Bhattacharyya
    parameter under a BPSK-AWGN design point; deterministic, ties broken
    toward lower indices."""
    rate = m / n
    es_n0 = rate * 10.0 ** (design_ebn0_db / 10.0)
    z = np.array([np.exp(-es_n0)], dtype=np.float64)
    for _ in range(int(np.log2(n))):
        z = np.concatenate([2.0 * z - z * z, z * z])
    order = np.argsort(-z, kind="stable")
    return tuple(sorted(int(i) for i in order[: n - m]))


def make_polar_code(n: int, m: int, design_ebn0_db: float = 5.0) -> PolarCode:
    return PolarCode(n=n, m=m, frozen=bhattacharyya_frozen_set(n, m, design_ebn0_db))


def polar_encode(bits: np.ndarray, code: PolarCode) -> np.ndarray:
    """x = u G_n over GF(2); information bits on info indices, zeros frozen."""
    bits = np.asarray(bits).astype(np.uint8)
    if bits.shape != (code.m,):
        raise ValueError(f"expected {code.m} information bits, got {bits.shape}")
    u = np.zeros(code.n, dtype=np.uint8)
    u[list(code.info)] = bits
    return (u @ polar_generator(code.n)) % 2


def polar_parity_check(code: PolarCode) -> np.ndarray:
    """P row i = column frozen[i] of G_n; P x = 0 for every codeword."""
    g = polar_generator(code.n)
    return g[:, list(code.frozen)].T.copy()


def extract_info_bits(codeword_bits: np.ndarray, code: PolarCode) -> np.ndarray:
    """Invert encoding (G_n is self-inverse mod 2) and read info positions."""
    u = (np.asarray(codeword_bits, dtype=np.uint8) @ polar_generator(code.n)) % 2
    return u[list(code.info)]


def sign_pos(x: np.ndarray) -> np.ndarray:
    """Sign with the tie rule sign(0) = +1."""
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


def bin_from_sign(s: np.ndarray) -> np.ndarray:
    """bin(x) = (1 - sign(x)) / 2, mapping +1 -> 0, -1 -> 1."""
    return ((1.0 - sign_pos(s)) / 2.0).astype(np.uint8)


def syndrome(hard_bits: np.ndarray, code: PolarCode) -> np.ndarray:
    return (polar_parity_check(code) @ np.asarray(hard_bits, dtype=np.uint8)) % 2


def ebn0_to_sigma2(ebn0_db: float, rate: float) -> float:
    """Real-noise variance for BPSK at rate-adjusted Eb/N0."""
    return 1.0 / (2.0 * rate * 10.0 ** (ebn0_db / 10.0))


def make_decoding_sample(bits: np.ndarray, code: PolarCode, ebn0_db: float,
                         seed) -> DecodingSample:
    rng = np.random.default_rng(np.uint64(seed))
    codeword = polar_encode(bits, code)
    s_bpsk = 1.0 - 2.0 * codeword.astype(np.float64)
    sigma2 = ebn0_to_sigma2(ebn0_db, code.rate)
    s_hat = s_bpsk + np.sqrt(sigma2) * rng.standard_normal(code.n)
    hard = bin_from_sign(s_hat)
    s_tilde = np.concatenate([np.abs(s_hat), syndrome(hard, code).astype(np.float64)])
    z_tilde = bin_from_sign(s_hat * s_bpsk)
    return DecodingSample(bits=np.asarray(bits, dtype=np.uint8), codeword=codeword,
                          s_bpsk=s_bpsk, s_hat=s_hat, s_tilde=s_tilde,
                          z_tilde=z_tilde, ebn0_db=ebn0_db)


def noise_prob_to_sign(p_hat: np.ndarray) -> np.ndarray:
    """Map predicted flip probabilities to +-1 multiplicative-noise signs."""
    return sign_pos(1.0 - 2.0 * np.asarray(p_hat, dtype=np.float64))


def ecct_postprocess(s_hat: np.ndarray, z_hat: np.ndarray) -> np.ndarray:
    """Denoised hard decisions bin(sign(s_hat * z_hat)); z_hat in +-1 domain."""
    s_hat = np.asarray(s_hat, dtype=np.float64)
    z_hat = np.asarray(z_hat, dtype=np.float64)
    if s_hat.shape != z_hat.shape:
        raise ValueError(f"length mismatch: {s_hat.shape} vs {z_hat.shape}")
    return bin_from_sign(s_hat * z_hat)


# ---------------------------------------------------------------------------
# rate and metrics
# ---------------------------------------------------------------------------

def sum_rate(h: np.ndarray, w: np.ndarray, sigma2: float) -> float:
    """Sum over users of log2(1 + SINR_k) for precoders w (columns = users)."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    if h.shape != w.shape:
        raise ValueError(f"shape mismatch: {h.shape} vs {w.shape}")
    a = np.abs(h.conj().T @ w) ** 2          # a[k, j] = |h_k^H w_j|^2
    sig = np.diag(a)
    interf = a.sum(axis=1) - sig
    return float(np.sum(np.log2(1.0 + sig / (interf + sigma2))))


def nmse(est: np.ndarray, truth: np.ndarray) -> float:
    t = np.asarray(truth)
    denom = float(np.sum(np.abs(t) ** 2))
    if denom == 0.0:
        raise ValueError("nmse undefined for zero truth")
    return float(np.sum(np.abs(np.asarray(est) - t) ** 2) / denom)


def ber(bits_hat: np.ndarray, bits: np.ndarray) -> float:
    a = np.asarray(bits_hat).astype(np.uint8)
    b = np.asarray(bits).astype(np.uint8)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(a != b))


def loc_error(pos_hat: np.ndarray, pos: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(pos_hat) - np.asarray(pos)))

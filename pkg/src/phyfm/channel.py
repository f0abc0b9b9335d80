"""Frequency-domain multipath channel assembly and noise utilities.

Per user and subcarrier the channel is a sum over traced paths of
(complex gain) x (delay phase) x (array steering vector); the steering
vector follows the UPA convention

    a[n_v * N_h + n_h] = exp(j * k_m * d * (n_v sin(phi) sin(theta) + n_h cos(theta))) / sqrt(N_t)

with k_m the wavenumber of the subcarrier being evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .propagation import C_LIGHT, Path, PathList

BOUNCE_LOSS = 0.6  # amplitude kept per specular bounce, material-independent


@dataclass(frozen=True)
class ArrayGeometry:
    n_h: int
    n_v: int
    spacing: float      # element spacing d, meters
    f_c: float          # center frequency, Hz
    n_sub: int          # subcarriers M
    delta_f: float      # subcarrier spacing, Hz

    def __post_init__(self):
        if self.n_h < 1 or self.n_v < 1:
            raise ValueError("antenna counts must be >= 1")
        if self.spacing <= 0 or self.delta_f <= 0:
            raise ValueError("spacing and subcarrier spacing must be positive")

    @property
    def n_t(self) -> int:
        return self.n_h * self.n_v

    def freqs(self) -> np.ndarray:
        m = np.arange(self.n_sub)
        return self.f_c + (m - (self.n_sub - 1) / 2.0) * self.delta_f


def half_wavelength(f_c: float) -> float:
    return 0.5 * C_LIGHT / f_c


def _geometry_factor(theta: float, phi: float, geom: ArrayGeometry) -> np.ndarray:
    """Per-element phase factor d*(n_v sin phi sin theta + n_h cos theta),
    flattened with n = n_v * N_h + n_h."""
    nv = np.arange(geom.n_v)[:, None]
    nh = np.arange(geom.n_h)[None, :]
    fac = nv * (np.sin(phi) * np.sin(theta)) + nh * np.cos(theta)
    return (geom.spacing * fac).reshape(-1)


def steering_vector(theta: float, phi: float, f_hz: float,
                    geom: ArrayGeometry) -> np.ndarray:
    """Unit-norm steering vector at one frequency; shape (N_t,)."""
    k = 2.0 * np.pi * f_hz / C_LIGHT
    phase = k * _geometry_factor(theta, phi, geom)
    return np.exp(1j * phase) / np.sqrt(geom.n_t)


def path_gain(path: Path, f_hz: float, f_c: float | None = None) -> complex:
    """Frequency-flat complex gain: Friis amplitude with per-bounce loss.

    The delay phase exp(-j 2 pi f tau) is applied during assembly, not here.
    """
    if path.length <= 0:
        raise ValueError("path length must be positive")
    fc = f_c if f_c is not None else f_hz
    lam = C_LIGHT / fc
    return complex((lam / (4.0 * np.pi * path.length)) * BOUNCE_LOSS ** path.n_bounces)


def assemble_channel(paths: PathList, geom: ArrayGeometry) -> np.ndarray:
    """Multipath sum over traced paths; returns (N_t, M) complex (one user).

    Empty path lists produce the zero matrix. The result is linear in the
    path list: concatenating two lists sums their channels exactly.
    """
    freqs = geom.freqs()
    k_m = 2.0 * np.pi * freqs / C_LIGHT
    h = np.zeros((geom.n_t, geom.n_sub), dtype=np.complex128)
    inv_sqrt_nt = 1.0 / np.sqrt(geom.n_t)
    for p in paths:
        beta = path_gain(p, geom.f_c, f_c=geom.f_c)
        fac = _geometry_factor(p.aod_elevation, p.aod_azimuth, geom)  # (N_t,)
        steer = np.exp(1j * np.outer(fac, k_m)) * inv_sqrt_nt         # (N_t, M)
        delay = np.exp(-2j * np.pi * freqs * p.delay)                 # (M,)
        h += beta * steer * delay[None, :]
    return h


def normalize_channel(h: np.ndarray) -> tuple:
    """Scale one user's (N_t, M) channel so the average per-subcarrier
    squared norm equals N_t; returns (h_norm, scale). Zero input is kept
    as-is with scale 1."""
    n_t, n_sub = h.shape
    power = float(np.sum(np.abs(h) ** 2))
    if power == 0.0:
        return h.copy(), 1.0
    scale = float(np.sqrt(n_t * n_sub / power))
    return h * scale, scale


def snr_to_sigma2(snr_db: float, signal_power: float = 1.0) -> float:
    if signal_power <= 0:
        raise ValueError("signal_power must be positive")
    return signal_power * 10.0 ** (-snr_db / 10.0)


def awgn(shape, sigma2: float, seed) -> np.ndarray:
    """Circularly-symmetric complex Gaussian, variance sigma2 per entry.

    ``seed`` may be an integer or a numpy Generator.
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(np.uint64(seed))
    s = np.sqrt(sigma2 / 2.0)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def complex_to_interleaved(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Interleave (re, im) along ``axis``, doubling its length."""
    a = np.asarray(a)
    stacked = np.stack([a.real, a.imag], axis=-1)  # (..., 2)
    moved = np.moveaxis(stacked, (axis if axis >= 0 else a.ndim + axis), -2)
    shape = list(moved.shape[:-2]) + [moved.shape[-2] * 2]
    flat = moved.reshape(shape)
    return np.moveaxis(flat, -1, axis if axis >= 0 else a.ndim + axis)


def interleaved_to_complex(a: np.ndarray, axis: int = -1) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    moved = np.moveaxis(a, axis, -1)
    if moved.shape[-1] % 2 != 0:
        raise ValueError("interleaved axis length must be even")
    pairs = moved.reshape(moved.shape[:-1] + (moved.shape[-1] // 2, 2))
    result = pairs[..., 0] + 1j * pairs[..., 1]
    return np.moveaxis(result, -1, axis if axis != -1 else result.ndim - 1)

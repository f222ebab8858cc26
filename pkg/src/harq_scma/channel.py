"""Rayleigh fading, AWGN and superposition of SCMA codewords.

The receiver sees, per channel use, the K-vector

    y = sum_j diag(h_j) x_j + z,      z ~ CN(0, n0 I)

with h entries i.i.d. CN(0, 1) (unit average power). Fading granularity is
either one independent draw per SCMA codeword use ("fast", the default) or
one draw per HARQ round/slot ("block"); both are exposed because chase
combining behaves differently when rounds share fading.

SNR convention: codebooks have unit average codeword energy per user, so
`snr_db` means per-user-per-codeword symbol energy over N0 and
n0 = 10^(-snr_db/10).
"""

from dataclasses import dataclass

import numpy as np

FADING_MODES = ("fast", "block")


@dataclass(frozen=True)
class FadingBlock:
    """Channel coefficients h for one channel use; h[k, j] links user j to resource k."""

    h: np.ndarray  # (K, J) complex


@dataclass(frozen=True)
class ReceivedSlot:
    """One received K-vector and the noise variance it was generated with."""

    y: np.ndarray  # (K,) complex
    n0: float

    def __post_init__(self):
        if not self.n0 > 0:
            raise ValueError(f"noise variance must be positive, got {self.n0}")


def noise_variance_for_snr(snr_db):
    """Linear noise variance N0 for a per-user symbol SNR in dB (E_s = 1)."""
    return float(10.0 ** (-snr_db / 10.0))


def sample_fading(rng, K, J, n_uses=None):
    """Draw i.i.d. CN(0,1) coefficients.

    Returns (K, J) for a single use, or (n_uses, K, J) when `n_uses` is given.
    """
    shape = (K, J) if n_uses is None else (n_uses, K, J)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return np.sqrt(0.5) * (re + 1j * im)


def sample_noise(rng, shape, n0):
    """Complex AWGN with total variance n0 per entry."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return np.sqrt(n0 / 2.0) * (re + 1j * im)


def superimpose(active, n0, rng):
    """Superimpose faded codewords of the transmitting users onto one channel use.

    `active` is a list of (codeword, fading column) pairs, each a K-vector;
    which users appear is the caller's business (sync mode passes everyone,
    async mode passes whoever transmits in the slot). Returns a ReceivedSlot.
    """
    items = list(active)
    if not items:
        raise ValueError("no transmitting users")
    K = len(items[0][0])
    y = np.zeros(K, dtype=np.complex128)
    for x, h in items:
        x = np.asarray(x)
        h = np.asarray(h)
        if x.shape != (K,) or h.shape != (K,):
            raise ValueError(f"codeword/fading length mismatch: {x.shape} vs ({K},)")
        y += h * x
    y += sample_noise(rng, (K,), n0)
    return ReceivedSlot(y=y, n0=n0)


def fading_for_slot(rng, mode, n_uses, K, J):
    """Per-slot fading tensor (n_uses, K, J) honoring the granularity mode."""
    if mode == "fast":
        return sample_fading(rng, K, J, n_uses=n_uses)
    if mode == "block":
        h = sample_fading(rng, K, J)
        return np.broadcast_to(h, (n_uses, K, J)).copy()
    raise ValueError(f"unknown fading mode {mode!r} (expected one of {FADING_MODES})")


def transmit_slot(codebook, indices, h, n0, rng):
    """Vectorized superposition of a whole slot of SCMA codeword uses.

    `indices` is (J, n_uses) int with the codeword index each user sends at
    each use, -1 meaning the user is silent there. `h` is (n_uses, K, J).
    Returns y with shape (n_uses, K).
    """
    indices = np.asarray(indices)
    J, n_uses = indices.shape
    y = np.zeros((n_uses, K_ := codebook.K), dtype=np.complex128)
    for j in range(J):
        idx = indices[j]
        live = idx >= 0
        if not live.any():
            continue
        x = codebook.codewords[j, idx[live], :]          # (n_live, K)
        y[live] += h[live, :, j] * x
    y += sample_noise(rng, (n_uses, K_), n0)
    return y

"""SCMA codebooks: loading, validation, bit mapping and sparsity structure.

A codebook assigns each of the J users a private set of M complex codewords
of length K. Codewords are sparse: every codeword of a user occupies the
same d_v < K resources, and each resource is shared by exactly d_f users.
The occupancy pattern doubles as the topology of the detection factor graph.

Conventions fixed here and relied on everywhere else:

* bit-to-codeword labeling is the big-endian binary value of the bit
  vector (bits (1,0) with M=4 select codeword index 2);
* average codeword energy per user is 1 (tolerance 1e-9), which makes
  "SNR" mean per-user symbol energy over N0.
"""

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ENERGY_TOL = 1e-9

_HEADER = "scma-codebook v1"


class CodebookError(ValueError):
    """Raised when a codebook document is malformed or violates an invariant."""


@dataclass(frozen=True)
class IndicatorStructure:
    """Boolean occupancy of resources by users, with derived neighbor sets."""

    occupancy: np.ndarray  # (K, J) bool
    neighbors_of_resource: tuple = field(default=None)  # per k: user indices
    neighbors_of_user: tuple = field(default=None)      # per j: resource indices

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=bool)
        object.__setattr__(self, "occupancy", occ)
        object.__setattr__(
            self, "neighbors_of_resource",
            tuple(tuple(np.flatnonzero(occ[k])) for k in range(occ.shape[0])))
        object.__setattr__(
            self, "neighbors_of_user",
            tuple(tuple(np.flatnonzero(occ[:, j])) for j in range(occ.shape[1])))


@dataclass(frozen=True)
class ScmaCodebook:
    """Validated per-user codeword sets plus the derived sparsity structure."""

    codewords: np.ndarray  # (J, M, K) complex128

    def __post_init__(self):
        cw = np.ascontiguousarray(np.asarray(self.codewords, dtype=np.complex128))
        if cw.ndim != 3:
            raise CodebookError("codewords must be a J x M x K array")
        object.__setattr__(self, "codewords", cw)
        _validate(cw)

    @property
    def J(self):
        return self.codewords.shape[0]

    @property
    def M(self):
        return self.codewords.shape[1]

    @property
    def K(self):
        return self.codewords.shape[2]

    @property
    def bits_per_symbol(self):
        return int(self.M).bit_length() - 1

    @property
    def occupancy(self):
        """(K, J) boolean resource-occupancy matrix."""
        return self.codewords[:, 0, :].T != 0

    @property
    def d_v(self):
        return int(self.occupancy[:, 0].sum())

    @property
    def d_f(self):
        return int(self.occupancy[0, :].sum())

    @property
    def indicator(self):
        return IndicatorStructure(self.occupancy)

    def mean_resource_energy(self):
        """(K, J) average |codeword entry|^2 over the M codewords of each user.

        This is the per-resource interference power a user contributes when
        its codeword is unknown and uniformly distributed (used for treating
        discarded packets as noise).
        """
        return np.mean(np.abs(self.codewords) ** 2, axis=1).T


def _validate(cw):
    J, M, K = cw.shape
    if M < 2 or (M & (M - 1)) != 0:
        raise CodebookError(f"M={M} is not a power of two")
    supports = cw != 0  # (J, M, K)
    for j in range(J):
        if not (supports[j] == supports[j, 0]).all():
            bad = int(np.flatnonzero(~(supports[j] == supports[j, 0]).all(axis=1))[0])
            raise CodebookError(
                f"user {j}: codeword {bad} has a different resource support "
                f"than codeword 0")
    occ = supports[:, 0, :].T  # (K, J)
    col = occ.sum(axis=0)
    row = occ.sum(axis=1)
    if not (col == col[0]).all():
        raise CodebookError(f"per-user resource counts differ: {col.tolist()}")
    if not (row == row[0]).all():
        raise CodebookError(f"per-resource user counts differ: {row.tolist()}")
    d_v = int(col[0])
    if d_v == 0:
        raise CodebookError("codewords are all-zero")
    if d_v >= K:
        raise CodebookError(f"d_v={d_v} must be smaller than K={K}")
    energy = np.mean(np.sum(np.abs(cw) ** 2, axis=2), axis=1)  # per user
    worst = float(np.max(np.abs(energy - 1.0)))
    if worst > ENERGY_TOL:
        raise CodebookError(
            f"average codeword energy off unity by {worst:.3e} (tol {ENERGY_TOL})")


def bits_to_index(bits):
    """Big-endian binary value of a bit vector (first bit is the MSB)."""
    idx = 0
    for b in bits:
        idx = (idx << 1) | int(b)
    return idx


def index_to_bits(idx, width):
    """Inverse of :func:`bits_to_index`; returns an int8 array of `width` bits."""
    return np.array([(idx >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.int8)


def map_bits(codebook, user, bits):
    """Map log2(M) coded bits of one user to its K-dimensional codeword."""
    if not 0 <= user < codebook.J:
        raise IndexError(f"user index {user} out of range [0, {codebook.J})")
    bits = np.asarray(bits)
    if bits.shape != (codebook.bits_per_symbol,):
        raise ValueError(
            f"expected {codebook.bits_per_symbol} bits, got shape {bits.shape}")
    return codebook.codewords[user, bits_to_index(bits)]


def map_bit_stream(codebook, user, bits):
    """Map a coded-bit stream to a vector of codeword indices.

    `bits` length must be a multiple of log2(M); consecutive groups form one
    SCMA symbol each, big-endian within a group.
    """
    bps = codebook.bits_per_symbol
    bits = np.asarray(bits, dtype=np.int64).reshape(-1, bps)
    weights = 1 << np.arange(bps - 1, -1, -1)
    return bits @ weights


def parse_codebook(text):
    """Parse the `scma-codebook v1` document format into a ScmaCodebook."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0].split() != _HEADER.split():
        raise CodebookError(f"missing or unknown header (expected '{_HEADER}')")
    dims = lines[1].split() if len(lines) > 1 else []
    if len(dims) != 3:
        raise CodebookError("dimension line must hold exactly 'J K M'")
    try:
        J, K, M = (int(v) for v in dims)
    except ValueError as exc:
        raise CodebookError(f"bad dimension line: {lines[1]!r}") from exc
    if min(J, K, M) < 1:
        raise CodebookError("J, K, M must be positive")
    body = lines[2:]
    if len(body) != J * M:
        raise CodebookError(f"expected {J * M} codeword lines, found {len(body)}")
    cw = np.zeros((J, M, K), dtype=np.complex128)
    for n, line in enumerate(body):
        entries = line.split()
        if len(entries) != K:
            raise CodebookError(f"codeword line {n}: expected {K} entries, got {len(entries)}")
        for k, tok in enumerate(entries):
            parts = tok.split(":")
            if len(parts) != 2:
                raise CodebookError(f"codeword line {n}: entry {tok!r} is not 're:im'")
            try:
                cw[n // M, n % M, k] = complex(float(parts[0]), float(parts[1]))
            except ValueError as exc:
                raise CodebookError(f"codeword line {n}: bad number in {tok!r}") from exc
    return ScmaCodebook(cw)


def load_codebook(source):
    """Load and validate a codebook document from a path or file object."""
    if hasattr(source, "read"):
        return parse_codebook(source.read())
    return parse_codebook(Path(source).read_text())


def dump_codebook(codebook):
    """Serialize a codebook to the document format (round-trips exactly)."""

    def fmt(c):
        re, im = c.real + 0.0, c.imag + 0.0  # normalize -0.0
        return f"{re:.17g}:{im:.17g}"

    out = [_HEADER, f"{codebook.J} {codebook.K} {codebook.M}"]
    for j in range(codebook.J):
        for m in range(codebook.M):
            out.append(" ".join(fmt(c) for c in codebook.codewords[j, m]))
    return "\n".join(out) + "\n"


def save_codebook(codebook, path):
    Path(path).write_text(dump_codebook(codebook))


def asset_dir():
    """Directory holding shipped codebook assets (HARQ_SCMA_ASSETS overrides)."""
    env = os.environ.get("HARQ_SCMA_ASSETS")
    if env:
        return Path(env)
    return Path(__file__).resolve().parent / "assets"


DEFAULT_CODEBOOK_FILE = "default_j6_k4_m4.cb"


def default_codebook_path():
    return asset_dir() / DEFAULT_CODEBOOK_FILE


def default_codebook():
    """The shipped J=6, K=4, M=4 codebook (d_v=2, d_f=3)."""
    return load_codebook(default_codebook_path())

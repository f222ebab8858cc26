"""CRC framing and soft-decision channel coding.

The channel code is a terminated rate-1/3 recursive systematic convolutional
mother code, constraint length 4, generators 13/15/17 octal (13 is the
feedback), decoded with a max-log BCJR over the 8-state trellis. First
transmissions are punctured to rate 1/2 (systematic plus parity bits
alternating between the two streams); the complementary parity selection
forms the incremental-redundancy retransmission. The codec is stateless and
batch-friendly: every array API accepts a leading batch axis.

CRC is CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection, no
final xor), appended big-endian.

LLR sign convention throughout: positive means bit 1 is more likely.
"""

import numpy as np

CRC_POLY = 0x1021
CRC_INIT = 0xFFFF
CRC_BITS = 16

MEMORY = 3
N_STATES = 1 << MEMORY
TAIL_STEPS = MEMORY
RATE_MOTHER = 3


def _crc_table():
    table = np.zeros(256, dtype=np.uint16)
    for byte in range(256):
        reg = byte << 8
        for _ in range(8):
            if reg & 0x8000:
                reg = ((reg << 1) ^ CRC_POLY) & 0xFFFF
            else:
                reg = (reg << 1) & 0xFFFF
        table[byte] = reg
    return table


_CRC_TABLE = _crc_table()


def crc16(bits):
    """CRC-16/CCITT-FALSE register over a bit vector (MSB-first semantics)."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim != 1 or bits.size == 0:
        raise ValueError("crc16 expects a nonempty 1-D bit vector")
    reg = CRC_INIT
    n_bytes = bits.size // 8
    if n_bytes:
        for byte in np.packbits(bits[: n_bytes * 8]):
            reg = ((reg << 8) & 0xFFFF) ^ int(_CRC_TABLE[((reg >> 8) ^ byte) & 0xFF])
    for b in bits[n_bytes * 8:]:
        fb = int(b) ^ (reg >> 15)
        reg = ((reg << 1) & 0xFFFF) ^ (CRC_POLY if fb else 0)
    return reg


def crc16_attach(info_bits):
    """Append the 16 CRC bits (big-endian) to an info bit vector."""
    info_bits = np.asarray(info_bits, dtype=np.int8)
    reg = crc16(info_bits)
    crc_bits = np.array([(reg >> (15 - i)) & 1 for i in range(16)], dtype=np.int8)
    return np.concatenate([info_bits, crc_bits])


def crc16_check(bits):
    """True iff the trailing 16 bits match the CRC of the preceding bits."""
    bits = np.asarray(bits, dtype=np.int8)
    if bits.size <= CRC_BITS:
        return False
    reg = crc16(bits[:-CRC_BITS])
    expected = np.array([(reg >> (15 - i)) & 1 for i in range(16)], dtype=np.int8)
    return bool(np.array_equal(expected, bits[-CRC_BITS:]))


# ------------------------------------------------------------------ trellis

def _build_trellis():
    # state s = (s1, s2, s3) packed MSB-first; feedback 1+D^2+D^3,
    # parities 1+D+D^3 and 1+D+D^2+D^3 on the recursion output
    next_state = np.zeros((N_STATES, 2), dtype=np.int64)
    out = np.zeros((N_STATES, 2, 3), dtype=np.int8)
    for s in range(N_STATES):
        s1, s2, s3 = (s >> 2) & 1, (s >> 1) & 1, s & 1
        for u in (0, 1):
            a = u ^ s2 ^ s3
            next_state[s, u] = (a << 2) | (s >> 1)
            out[s, u, 0] = u
            out[s, u, 1] = a ^ s1 ^ s3
            out[s, u, 2] = a ^ s1 ^ s2 ^ s3
    return next_state, out


NEXT_STATE, STEP_OUT = _build_trellis()

# flat edge tables: edge e = 2*s + u
E_FROM = np.repeat(np.arange(N_STATES), 2)
E_U = np.tile(np.array([0, 1]), N_STATES)
E_TO = NEXT_STATE.reshape(-1)
E_OUT = STEP_OUT.reshape(-1, 3).astype(np.float64)

_IN_EDGES = np.stack([np.flatnonzero(E_TO == s) for s in range(N_STATES)])  # (8, 2)
_IN_FROM = E_FROM[_IN_EDGES]
_OUT_EDGES = np.arange(2 * N_STATES).reshape(N_STATES, 2)                   # (8, 2)
_OUT_TO = E_TO[_OUT_EDGES]


def _tail_inputs(state):
    """Flush bit for the current state (drives the recursion to zero)."""
    return ((state >> 1) & 1) ^ (state & 1)


def encode(bits):
    """Encode payload bits with the terminated rate-1/3 mother code.

    Accepts (n,) or (B, n); returns (3*(n+3),) or (B, 3*(n+3)) with the
    three output bits of each trellis step stored consecutively
    (systematic, parity-1, parity-2).
    """
    bits = np.asarray(bits, dtype=np.int64)
    squeeze = bits.ndim == 1
    if squeeze:
        bits = bits[None, :]
    B, n = bits.shape
    coded = np.zeros((B, n + TAIL_STEPS, 3), dtype=np.int8)
    state = np.zeros(B, dtype=np.int64)
    rows = np.arange(B)
    for t in range(n + TAIL_STEPS):
        u = bits[:, t] if t < n else _tail_inputs(state)
        coded[:, t, :] = STEP_OUT[state, u]
        state = NEXT_STATE[state, u]
    assert (state == 0).all()
    coded = coded.reshape(B, -1)
    return coded[0] if squeeze else coded


def mother_length(n_payload):
    return RATE_MOTHER * (n_payload + TAIL_STEPS)


def siso_decode(mother_llrs, n_payload):
    """Max-log BCJR over the mother trellis; hard decisions on payload bits.

    `mother_llrs` is (3*(n_payload+3),) or batched (B, ...); positions never
    transmitted must be zero-filled. Returns decisions with the tail steps
    stripped, shaped like the input minus the batch handling.
    """
    llrs = np.asarray(mother_llrs, dtype=np.float64)
    squeeze = llrs.ndim == 1
    if squeeze:
        llrs = llrs[None, :]
    n_steps = n_payload + TAIL_STEPS
    if llrs.shape[1] != RATE_MOTHER * n_steps:
        raise ValueError(
            f"expected {RATE_MOTHER * n_steps} mother LLRs, got {llrs.shape[1]}")
    B = llrs.shape[0]
    step_llrs = llrs.reshape(B, n_steps, 3)
    gamma = np.einsum("bti,ei->bte", step_llrs, E_OUT)

    alpha = np.empty((B, n_steps + 1, N_STATES))
    alpha[:, 0, :] = -np.inf
    alpha[:, 0, 0] = 0.0
    for t in range(n_steps):
        a = np.max(alpha[:, t, _IN_FROM] + gamma[:, t, _IN_EDGES], axis=2)
        alpha[:, t + 1] = a - a.max(axis=1, keepdims=True)

    beta = np.empty((B, n_steps + 1, N_STATES))
    beta[:, n_steps, :] = -np.inf
    beta[:, n_steps, 0] = 0.0
    for t in range(n_steps - 1, -1, -1):
        b = np.max(gamma[:, t, _OUT_EDGES] + beta[:, t + 1, _OUT_TO], axis=2)
        beta[:, t] = b - b.max(axis=1, keepdims=True)

    lam = (alpha[:, :-1, E_FROM] + gamma + beta[:, 1:, E_TO])  # (B, n_steps, 16)
    with np.errstate(invalid="ignore"):
        info_llr = lam[:, :, E_U == 1].max(axis=2) - lam[:, :, E_U == 0].max(axis=2)
    decisions = (info_llr > 0).astype(np.int8)[:, :n_payload]
    return decisions[0] if squeeze else decisions


# --------------------------------------------------------------- puncturing

class PunctureSchedule:
    """Per-round bit selections over the mother-code output.

    Round 1 transmits every systematic bit plus one parity per step,
    alternating between the two parity streams (rate 1/2). Round 2 transmits
    the complementary parity selection, completing the mother code; rounds
    beyond 2 repeat the round-2 selection.
    """

    def __init__(self, n_steps):
        self.n_steps = n_steps
        self.n_mother = RATE_MOTHER * n_steps
        t = np.arange(n_steps)
        first = np.zeros(self.n_mother, dtype=bool)
        first[3 * t] = True                        # systematic
        first[3 * t[t % 2 == 0] + 1] = True        # parity-1 on even steps
        first[3 * t[t % 2 == 1] + 2] = True        # parity-2 on odd steps
        second = np.zeros(self.n_mother, dtype=bool)
        second[3 * t[t % 2 == 1] + 1] = True
        second[3 * t[t % 2 == 0] + 2] = True
        self._masks = (first, second)

    def mask(self, q):
        if q < 1:
            raise ValueError(f"round index must be >= 1, got {q}")
        return self._masks[0] if q == 1 else self._masks[1]

    def positions(self, q):
        return np.flatnonzero(self.mask(q))

    def n_tx_bits(self, q):
        return int(self.mask(q).sum())


def depuncture(llrs, positions, n_mother):
    """Scatter transmitted-bit LLRs into a zero-filled mother-length vector."""
    positions = np.asarray(positions)
    llrs = np.asarray(llrs, dtype=np.float64)
    if llrs.shape[-1] != positions.size:
        raise ValueError(f"{positions.size} positions but {llrs.shape[-1]} LLRs")
    out = np.zeros(llrs.shape[:-1] + (n_mother,))
    out[..., positions] = llrs
    return out


# -------------------------------------------------------------- frame codec

class FrameCodec:
    """CRC attachment, mother encoding and soft decoding for one frame size."""

    def __init__(self, n_info=200):
        self.n_info = n_info
        self.n_payload = n_info + CRC_BITS
        self.n_steps = self.n_payload + TAIL_STEPS
        self.n_mother = RATE_MOTHER * self.n_steps
        self.schedule = PunctureSchedule(self.n_steps)

    def encode_frame(self, info_bits):
        """info bits -> (payload with CRC, mother-coded bits)."""
        info_bits = np.asarray(info_bits, dtype=np.int8)
        if info_bits.shape[-1] != self.n_info:
            raise ValueError(f"expected {self.n_info} info bits")
        if info_bits.ndim == 1:
            payload = crc16_attach(info_bits)
        else:
            payload = np.stack([crc16_attach(row) for row in info_bits])
        return payload, encode(payload)

    def decode_mother(self, mother_llrs):
        """Depunctured mother LLRs -> (payload decisions, CRC verdicts)."""
        decisions = siso_decode(mother_llrs, self.n_payload)
        if decisions.ndim == 1:
            return decisions, crc16_check(decisions)
        ok = np.array([crc16_check(row) for row in decisions])
        return decisions, ok


def awgn_reference_ber(codec, ebn0_db, n_frames, rng, batch=200):
    """BER of the rate-1/2 punctured codec over BPSK/AWGN (calibration runs).

    E_b accounting uses the nominal rate 1/2 and unit coded-bit energy, so
    the per-bit noise variance is 1/(10^(ebn0/10)) per real dimension.
    """
    sigma2 = 1.0 / (10.0 ** (ebn0_db / 10.0))
    positions = codec.schedule.positions(1)
    errors = 0
    bits = 0
    done = 0
    while done < n_frames:
        b = min(batch, n_frames - done)
        info = rng.integers(0, 2, size=(b, codec.n_info), dtype=np.int8)
        payload, mother = codec.encode_frame(info)
        tx = mother[:, positions].astype(np.float64)
        y = (1.0 - 2.0 * tx) + rng.standard_normal(tx.shape) * np.sqrt(sigma2)
        llrs = -2.0 * y / sigma2
        dec, _ = codec.decode_mother(depuncture(llrs, positions, codec.n_mother))
        errors += int((dec[:, :codec.n_info] != info).sum())
        bits += b * codec.n_info
        done += b
    return errors / bits

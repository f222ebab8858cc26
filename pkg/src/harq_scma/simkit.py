"""Seeded Monte Carlo campaigns with worker-independent determinism.

A campaign runs one (mode, scheme) pair over an SNR grid. Work is split into
sessions: independent HARQ runs that each complete a fixed quota of
user-frames. Session randomness comes from a SeedSequence spawned with
(snr index, session index), and session tallies are merged in session order,
so the output is a pure function of the config no matter how many worker
processes execute it. Async sessions discard frames still in flight when
their quota is reached (bounded by the budget-slack allowance).

Results serialize to CSV with fixed field formatting; rates use a compact
scientific form (`0.000000e0` for zero) that parses back losslessly at desk
scale, and `read_results` reconstructs the integer counters.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from harq_scma.channel import FADING_MODES, noise_variance_for_snr
from harq_scma.codebook import default_codebook, load_codebook
from harq_scma.detector import KERNELS
from harq_scma.fec import FrameCodec
from harq_scma.harq import MODES, SCHEMES, AsyncSession, SyncSession

RESULT_HEADER = "snr_db,scheme,mode,Q,ber,fer,avg_tx,frames,bits,seed"


@dataclass(frozen=True)
class CampaignConfig:
    """Everything a campaign depends on; results are a pure function of this."""

    mode: str = "sync"
    scheme: str = "fga"
    Q: int = 2
    snr_db: tuple = (4.0, 6.0, 8.0)
    frames: int = 2000               # user-frame budget per SNR point
    n_info: int = 200
    mpa_iters: int = 6
    kernel: str = "max-log"
    seed: int = 1
    fading: str = "fast"
    workers: int = 1
    codebook: str = None             # path; None = shipped default asset
    count_dropped: bool = True       # include dropped frames in BER accounting
    frames_per_session: int = 24

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.fading not in FADING_MODES:
            raise ValueError(f"unknown fading mode {self.fading!r}")
        if self.Q < 1:
            raise ValueError("Q must be >= 1")
        if self.frames < 1:
            raise ValueError("frame budget must be positive")
        if not self.snr_db:
            raise ValueError("SNR grid must be nonempty")
        if self.mpa_iters < 1:
            raise ValueError("mpa_iters must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))


@dataclass
class MetricsRecord:
    """Accumulated statistics for one SNR point of one campaign."""

    snr_db: float
    scheme: str
    mode: str
    Q: int
    seed: int
    bit_errors: int
    bits: int
    frame_errors: int
    frames: int
    total_tx: int
    dropped: int = field(default=0, compare=False)
    unresolved_after: tuple = field(default=(), compare=False)  # per round 1..Q

    @property
    def ber(self):
        return self.bit_errors / self.bits if self.bits else 0.0

    @property
    def fer(self):
        return self.frame_errors / self.frames if self.frames else 0.0

    @property
    def avg_tx(self):
        return self.total_tx / self.frames if self.frames else 0.0

    def ber_sigma(self):
        """Binomial standard error of the BER estimate."""
        if not self.bits:
            return 0.0
        p = self.ber
        return math.sqrt(max(p * (1.0 - p), 1.0 / self.bits) / self.bits)


@lru_cache(maxsize=8)
def _codebook_for(path):
    return load_codebook(path) if path else default_codebook()


def _session_rng(seed, snr_idx, session_idx):
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(snr_idx, session_idx)))


def _run_session(config, snr_idx, session_idx):
    """One independent session; returns a plain counter tuple for merging."""
    cb = _codebook_for(config.codebook)
    codec = FrameCodec(n_info=config.n_info)
    n0 = noise_variance_for_snr(config.snr_db[snr_idx])
    rng = _session_rng(config.seed, snr_idx, session_idx)
    kwargs = dict(mpa_iters=config.mpa_iters, kernel=config.kernel,
                  fading=config.fading)
    quota = config.frames_per_session
    results = []
    if config.mode == "sync":
        sess = SyncSession(cb, codec, config.scheme, config.Q, n0, rng, **kwargs)
        while len(results) < quota:
            cycle_results, _ = sess.run_cycle()
            results.extend(cycle_results)
    else:
        sess = AsyncSession(cb, codec, config.scheme, config.Q, n0, rng, **kwargs)
        results = sess.run(frames_target=quota)
    bit_errors = bits = frame_errors = frames = total_tx = dropped = 0
    unresolved = [0] * config.Q
    for r in results:
        frames += 1
        total_tx += r.tx_rounds
        if r.dropped:
            dropped += 1
        counted = config.count_dropped or not r.dropped
        if counted:
            bits += config.n_info
            bit_errors += r.bit_errors
        if r.dropped or r.bit_errors > 0:
            frame_errors += 1
        for q in range(1, config.Q + 1):
            if r.dropped or r.recovered_round > q:
                unresolved[q - 1] += 1
    return (bit_errors, bits, frame_errors, frames, total_tx, dropped, tuple(unresolved))


def _merge(config, snr_idx, tallies):
    agg = [0, 0, 0, 0, 0, 0, np.zeros(config.Q, dtype=int)]
    for t in tallies:
        for i in range(6):
            agg[i] += t[i]
        agg[6] += np.asarray(t[6])
    return MetricsRecord(
        snr_db=config.snr_db[snr_idx], scheme=config.scheme, mode=config.mode,
        Q=config.Q, seed=config.seed,
        bit_errors=agg[0], bits=agg[1], frame_errors=agg[2], frames=agg[3],
        total_tx=agg[4], dropped=agg[5], unresolved_after=tuple(agg[6].tolist()))


def run_campaign(config):
    """Run the campaign and return one MetricsRecord per SNR grid point."""
    _codebook_for(config.codebook)  # fail fast on bad codebook documents
    n_sessions = math.ceil(config.frames / config.frames_per_session)
    jobs = [(snr_idx, s) for snr_idx in range(len(config.snr_db))
            for s in range(n_sessions)]
    if config.workers == 1:
        tallies = [_run_session(config, *job) for job in jobs]
    else:
        chunk = max(1, len(jobs) // (config.workers * 4))
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            tallies = list(pool.map(_run_session, *zip(*[(config,) + j for j in jobs]),
                                    chunksize=chunk))
    records = []
    for snr_idx in range(len(config.snr_db)):
        rows = tallies[snr_idx * n_sessions: (snr_idx + 1) * n_sessions]
        records.append(_merge(config, snr_idx, rows))
    return records


# ------------------------------------------------------------- serialization

def format_rate(x):
    """Fixed-width scientific form for BER/FER fields (zero -> 0.000000e0)."""
    if x == 0:
        return "0.000000e0"
    exp = int(math.floor(math.log10(abs(x))))
    mant = x / (10.0 ** exp)
    mant = round(mant, 6)
    if abs(mant) >= 10.0:  # rounding carried over a decade
        mant /= 10.0
        exp += 1
    return f"{mant:.6f}e{exp}"


def _record_row(r):
    return ",".join([
        f"{r.snr_db:.4f}", r.scheme, r.mode, str(r.Q),
        format_rate(r.ber), format_rate(r.fer), f"{r.avg_tx:.6f}",
        str(r.frames), str(r.bits), str(r.seed)])


def write_results(records, destination):
    """Write records as the canonical results CSV; returns the text."""
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    text = "\n".join([RESULT_HEADER] + [_record_row(r) for r in records]) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        Path(destination).write_text(text)
    return text


def read_results(source):
    """Parse a results CSV back into MetricsRecords (integer counters rebuilt)."""
    text = source.read() if hasattr(source, "read") else Path(source).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != RESULT_HEADER:
        raise ValueError("not a results CSV (bad header)")
    records = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 10:
            raise ValueError(f"malformed row: {ln!r}")
        snr, scheme, mode, Q, ber, fer, avg_tx, frames, bits, seed = parts
        frames, bits = int(frames), int(bits)
        records.append(MetricsRecord(
            snr_db=float(snr), scheme=scheme, mode=mode, Q=int(Q), seed=int(seed),
            bit_errors=round(float(ber) * bits), bits=bits,
            frame_errors=round(float(fer) * frames), frames=frames,
            total_tx=round(float(avg_tx) * frames)))
    return records


def summarize(records):
    """Human-readable campaign summary with BER-monotonicity warnings."""
    records = list(records)
    lines = []
    r0 = records[0]
    lines.append(f"campaign: scheme={r0.scheme} mode={r0.mode} Q={r0.Q} seed={r0.seed}")
    lines.append(f"  totals: frames={sum(r.frames for r in records)} "
                 f"bits={sum(r.bits for r in records)} "
                 f"bit_errors={sum(r.bit_errors for r in records)} "
                 f"dropped={sum(r.dropped for r in records)}")
    for r in records:
        unres = "/".join(str(u) for u in r.unresolved_after) or "-"
        lines.append(f"  snr {r.snr_db:6.2f} dB: ber={format_rate(r.ber)} "
                     f"fer={format_rate(r.fer)} avg_tx={r.avg_tx:.3f} "
                     f"unresolved_after={unres}")
    by_snr = sorted(records, key=lambda r: r.snr_db)
    for lo, hi in zip(by_snr, by_snr[1:]):
        slack = 2.0 * math.hypot(lo.ber_sigma(), hi.ber_sigma())
        if hi.ber > lo.ber + slack:
            lines.append(f"  WARNING: BER not monotone beyond 2 sigma between "
                         f"{lo.snr_db:g} and {hi.snr_db:g} dB")
    return "\n".join(lines)


def config_fields():
    """Names of CampaignConfig fields (CLI/config-file key validation)."""
    return tuple(f.name for f in fields(CampaignConfig))


def with_overrides(config, **kwargs):
    return replace(config, **kwargs)

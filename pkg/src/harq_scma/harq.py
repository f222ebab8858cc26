"""HARQ state machines over SCMA detection, four schemes in two modes.

Schemes:

* ``fga``   -- chase retransmissions, all received rounds detected jointly on
  one aggregated factor graph before decoding;
* ``llrc``  -- chase retransmissions, each round detected alone, per-bit LLRs
  summed across the rounds of a frame before decoding;
* ``type1`` -- retransmission with no combining at all (current round only);
* ``ir``    -- retransmissions carry fresh mother-code parity; depunctured
  LLRs accumulate across rounds and are decoded jointly.

Modes:

* synchronous: users advance in lockstep; if anyone fails, everyone resends
  its codeword, and new frames start for all only once every user passed or
  the round limit Q is reached. Users that already passed keep transmitting
  and stay in the detection graph but are not decoded again.
* asynchronous: each user advances on its own round counter; a user that
  passes (or exhausts Q) starts a new frame next slot. Windowed joint
  detection subtracts packets that were meanwhile decoded and treats dropped
  packets as extra noise.

Feedback is ideal (error-free, zero delay). All randomness comes from the
caller-supplied generator; a session is single-owner state.
"""

from dataclasses import dataclass, field

import numpy as np

from harq_scma import fec
from harq_scma.channel import fading_for_slot, transmit_slot
from harq_scma.codebook import map_bit_stream
from harq_scma.detector import (
    DESIRED,
    DISCARDED,
    LLR_MAX,
    RECOVERED,
    SlotView,
    bit_llrs,
    build_async_graph,
    build_sync_graph,
    detect_slot,
    run_mpa,
)

SCHEMES = ("fga", "llrc", "type1", "ir")
MODES = ("sync", "async")

STATUS_ACTIVE = "active"
STATUS_RECOVERED = "recovered"
STATUS_DISCARDED = "discarded"


def llrc_combine(buffers):
    """Elementwise sum of per-round LLR vectors, clamped to +-LLR_MAX.

    All buffers must belong to the same frame and therefore share a length.
    """
    buffers = list(buffers)
    if not buffers:
        raise ValueError("no LLR buffers to combine")
    length = buffers[0].shape[-1]
    for b in buffers[1:]:
        if b.shape[-1] != length:
            raise ValueError("LLR buffers of one frame must share a length")
    return np.clip(np.sum(buffers, axis=0), -LLR_MAX, LLR_MAX)


@dataclass
class HarqUserState:
    """Book-keeping for one user's packet in flight."""

    q_j: int = 1
    status: str = STATUS_ACTIVE
    frame_id: int = 0
    pending_indices: np.ndarray = None   # SCMA codeword indices being (re)sent
    llr_buffer: list = field(default_factory=list)


@dataclass
class RoundOutcome:
    """What one detection/decoding pass produced (sync: round, async: slot)."""

    round_index: int
    scheme: str
    mode: str
    ack: np.ndarray              # (J,) CRC verdict (True for already-recovered)
    newly_recovered: tuple
    decoder_inputs: np.ndarray   # (J, n_mother) LLRs fed to the decoder (0 rows skipped)


@dataclass
class FrameResult:
    """One completed user-frame."""

    user: int
    recovered_round: int        # 0 means dropped after Q rounds
    tx_rounds: int
    bit_errors: int

    @property
    def dropped(self):
        return self.recovered_round == 0


def _pad_bits(bits, bps):
    """Pad a coded-bit matrix with zero bits to a whole number of symbols."""
    n = bits.shape[-1]
    pad = (-n) % bps
    if pad == 0:
        return bits, 0
    return np.concatenate([bits, np.zeros(bits.shape[:-1] + (pad,), bits.dtype)], -1), pad


class SyncSession:
    """Synchronous-mode HARQ over one group of J users."""

    def __init__(self, codebook, codec, scheme, Q, n0, rng,
                 mpa_iters=6, kernel="max-log", fading="fast"):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        if Q < 1:
            raise ValueError("Q must be >= 1")
        self.cb = codebook
        self.codec = codec
        self.scheme = scheme
        self.Q = Q
        self.n0 = n0
        self.rng = rng
        self.mpa_iters = mpa_iters
        self.kernel = kernel
        self.fading = fading

    def _transmit(self, tx_bits):
        """Coded bits (J, L) -> (indices, h, y, pad) for one round on air."""
        padded, pad = _pad_bits(tx_bits, self.cb.bits_per_symbol)
        indices = np.stack([map_bit_stream(self.cb, j, padded[j])
                            for j in range(self.cb.J)])
        n_sym = indices.shape[1]
        h = fading_for_slot(self.rng, self.fading, n_sym, self.cb.K, self.cb.J)
        y = transmit_slot(self.cb, indices, h, self.n0, self.rng)
        self.tx_log.append(indices)
        self.slot_log.append((y, h))
        return indices, h, y, pad

    def run_cycle(self):
        """Run one frame group to completion; returns (FrameResults, RoundOutcomes)."""
        cb, codec, J = self.cb, self.codec, self.cb.J
        sched = codec.schedule
        self.tx_log = []    # per round: transmitted symbol indices (J, n_sym)
        self.slot_log = []  # per round: (y, h) as seen on air
        info = self.rng.integers(0, 2, size=(J, codec.n_info), dtype=np.int8)
        payload, mother = codec.encode_frame(info)
        recovered_round = np.zeros(J, dtype=int)
        last_decisions = np.zeros((J, codec.n_payload), dtype=np.int8)
        llr_buffers = [[] for _ in range(J)]
        ir_acc = np.zeros((J, codec.n_mother))
        fga_slots = []
        outcomes = []
        q = 0
        while q < self.Q:
            q += 1
            tx_round = 1 if self.scheme != "ir" else q
            positions = sched.positions(tx_round)
            _, h, y, pad = self._transmit(mother[:, positions])
            if self.scheme == "fga":
                fga_slots.append((y, h))
                graph = build_sync_graph(cb, fga_slots, self.n0)
                llrs = bit_llrs(run_mpa(graph, self.mpa_iters, self.kernel), cb)
            else:
                llrs = np.stack(detect_slot(cb, y, h, self.n0, self.mpa_iters, self.kernel))
            if pad:
                llrs = llrs[:, :-pad]
            decoder_inputs = np.zeros((J, codec.n_mother))
            active = [j for j in range(J) if recovered_round[j] == 0]
            for j in active:
                if self.scheme == "fga" or self.scheme == "type1":
                    decoder_inputs[j] = fec.depuncture(llrs[j], positions, codec.n_mother)
                elif self.scheme == "llrc":
                    llr_buffers[j].append(llrs[j])
                    combined = llrc_combine(llr_buffers[j])
                    decoder_inputs[j] = fec.depuncture(combined, positions, codec.n_mother)
                else:  # ir
                    ir_acc[j, positions] += llrs[j]
                    decoder_inputs[j] = ir_acc[j]
            decisions, ok = codec.decode_mother(decoder_inputs[active])
            newly = []
            for row, j in enumerate(active):
                last_decisions[j] = decisions[row]
                if ok[row]:
                    recovered_round[j] = q
                    newly.append(j)
                    llr_buffers[j].clear()
            ack = recovered_round > 0
            outcomes.append(RoundOutcome(
                round_index=q, scheme=self.scheme, mode="sync",
                ack=ack.copy(), newly_recovered=tuple(newly),
                decoder_inputs=decoder_inputs))
            if ack.all():
                break
        results = []
        for j in range(J):
            errors = int((last_decisions[j, :codec.n_info] != info[j]).sum())
            results.append(FrameResult(
                user=j, recovered_round=int(recovered_round[j]),
                tx_rounds=q, bit_errors=errors))
        return results, outcomes


class _AsyncFrame:
    """One user packet across its HARQ rounds (asynchronous mode)."""

    __slots__ = ("user", "info", "payload", "mother", "first_slot", "status",
                 "recovered_indices", "decoded")

    def __init__(self, user, info, payload, mother, first_slot):
        self.user = user
        self.info = info
        self.payload = payload
        self.mother = mother
        self.first_slot = first_slot
        self.status = STATUS_ACTIVE
        self.recovered_indices = None
        self.decoded = None


class AsyncSession:
    """Asynchronous-mode HARQ: per-user round counters, windowed detection."""

    def __init__(self, codebook, codec, scheme, Q, n0, rng,
                 mpa_iters=6, kernel="max-log", fading="fast"):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        if Q < 1:
            raise ValueError("Q must be >= 1")
        self.cb = codebook
        self.codec = codec
        self.scheme = scheme
        self.Q = Q
        self.n0 = n0
        self.rng = rng
        self.mpa_iters = mpa_iters
        self.kernel = kernel
        self.fading = fading
        self.t = 0
        self.states = [HarqUserState() for _ in range(codebook.J)]
        self.frames = [self._new_frame(j) for j in range(codebook.J)]
        self.ir_acc = np.zeros((codebook.J, codec.n_mother))
        self._window = []  # (y, h, frames-at-slot tuple); keeps last Q slots

    def _new_frame(self, user):
        info = self.rng.integers(0, 2, size=self.codec.n_info, dtype=np.int8)
        payload, mother = self.codec.encode_frame(info)
        return _AsyncFrame(user, info, payload, mother, self.t)

    def _tx_bits(self, frame, q):
        tx_round = 1 if self.scheme != "ir" else q
        return frame.mother[self.codec.schedule.positions(tx_round)]

    def _chase_indices(self, frame):
        bits, _ = _pad_bits(self._tx_bits(frame, 1)[None, :], self.cb.bits_per_symbol)
        return map_bit_stream(self.cb, frame.user, bits[0])

    def step(self):
        """Transmit one slot, detect, decode everyone, advance states.

        Returns (FrameResults completed this slot, RoundOutcome).
        """
        cb, codec, J = self.cb, self.codec, self.cb.J
        bps = cb.bits_per_symbol
        tx_bits = [self._tx_bits(self.frames[j], self.states[j].q_j) for j in range(J)]
        n_syms = [(len(b) + bps - 1) // bps for b in tx_bits]
        self.last_n_syms = tuple(n_syms)
        n_uses = max(n_syms)
        pads = [n * bps - len(b) for n, b in zip(n_syms, tx_bits)]
        indices = np.full((J, n_uses), -1, dtype=np.int64)
        for j in range(J):
            padded, _ = _pad_bits(np.asarray(tx_bits[j])[None, :], bps)
            indices[j, :n_syms[j]] = map_bit_stream(cb, j, padded[0])
            self.states[j].pending_indices = indices[j, :n_syms[j]]
        h = fading_for_slot(self.rng, self.fading, n_uses, cb.K, J)
        y = transmit_slot(cb, indices, h, self.n0, self.rng)

        if self.scheme == "fga":
            self._window.append((y, h, tuple(self.frames)))
            if len(self._window) > self.Q:
                self._window.pop(0)
            llrs = self._detect_window()
        elif self.scheme == "ir" and len(set(n_syms)) > 1:
            presence = np.zeros((J, n_uses), dtype=bool)
            for j in range(J):
                presence[j, :n_syms[j]] = True
            llrs = detect_slot(cb, y, h, self.n0, self.mpa_iters, self.kernel,
                               presence=presence)
        else:
            llrs = detect_slot(cb, y, h, self.n0, self.mpa_iters, self.kernel)

        decoder_inputs = np.zeros((J, codec.n_mother))
        for j in range(J):
            q = self.states[j].q_j
            llr_j = llrs[j][:len(tx_bits[j])] if pads[j] else llrs[j]
            if self.scheme == "fga" or self.scheme == "type1":
                decoder_inputs[j] = fec.depuncture(
                    llr_j, codec.schedule.positions(1), codec.n_mother)
            elif self.scheme == "llrc":
                self.states[j].llr_buffer.append(llr_j)
                combined = llrc_combine(self.states[j].llr_buffer[-q:])
                decoder_inputs[j] = fec.depuncture(
                    combined, codec.schedule.positions(1), codec.n_mother)
            else:  # ir
                tx_round = min(q, 2)
                self.ir_acc[j, codec.schedule.positions(tx_round)] += llr_j
                decoder_inputs[j] = self.ir_acc[j]
        decisions, ok = codec.decode_mother(decoder_inputs)

        results = []
        newly = []
        for j in range(J):
            frame, state = self.frames[j], self.states[j]
            frame.decoded = decisions[j]
            if ok[j]:
                frame.status = STATUS_RECOVERED
                state.status = STATUS_RECOVERED
                if self.scheme == "fga":
                    _, re_mother = codec.encode_frame(decisions[j][:codec.n_info])
                    rebits, _ = _pad_bits(
                        re_mother[codec.schedule.positions(1)][None, :], bps)
                    frame.recovered_indices = map_bit_stream(cb, j, rebits[0])
                newly.append(j)
                results.append(FrameResult(
                    user=j, recovered_round=state.q_j, tx_rounds=state.q_j,
                    bit_errors=int((decisions[j][:codec.n_info] != frame.info).sum())))
            elif state.q_j >= self.Q:
                frame.status = STATUS_DISCARDED
                state.status = STATUS_DISCARDED
                results.append(FrameResult(
                    user=j, recovered_round=0, tx_rounds=state.q_j,
                    bit_errors=int((decisions[j][:codec.n_info] != frame.info).sum())))
            else:
                state.q_j += 1
        outcome = RoundOutcome(
            round_index=self.t, scheme=self.scheme, mode="async",
            ack=np.asarray(ok), newly_recovered=tuple(newly),
            decoder_inputs=decoder_inputs)
        self.t += 1
        for j in range(J):
            if self.frames[j].status != STATUS_ACTIVE:
                self.frames[j] = self._new_frame(j)
                self.states[j] = HarqUserState(frame_id=self.states[j].frame_id + 1)
                self.ir_acc[j] = 0.0
        return results, outcome

    def _detect_window(self):
        """Joint detection over the last max(q_j) slots with cancellation."""
        q_bar = max(s.q_j for s in self.states)
        if q_bar > len(self._window):
            raise RuntimeError("a live packet is older than the retained window")
        views = []
        for y, h, frames_then in self._window[-q_bar:]:
            status = np.empty(self.cb.J, dtype=int)
            recovered = {}
            for j, frame in enumerate(frames_then):
                if frame is self.frames[j]:
                    if frame.status != STATUS_ACTIVE:
                        raise RuntimeError("current frame must be active during detection")
                    status[j] = DESIRED
                elif frame.status == STATUS_RECOVERED:
                    status[j] = RECOVERED
                    recovered[j] = frame.recovered_indices
                else:
                    status[j] = DISCARDED
            views.append(SlotView(y=y, h=h, status=status, recovered_indices=recovered))
        graph = build_async_graph(self.cb, views, self.n0)
        marg = run_mpa(graph, self.mpa_iters, self.kernel)
        return list(bit_llrs(marg, self.cb))

    def run(self, frames_target, max_slots=None):
        """Step until `frames_target` user-frames completed; returns results."""
        if max_slots is None:
            max_slots = self.Q * (frames_target + self.cb.J * self.Q + 8)
        out = []
        while len(out) < frames_target and max_slots > 0:
            results, _ = self.step()
            out.extend(results)
            max_slots -= 1
        return out

"""Factor-graph construction and message-passing detection for SCMA.

A detection problem is a bipartite factor graph: one variable node (VN) per
user packet being estimated, one factor node (FN) per (resource, round/slot)
pair. Every FN carries, per channel use, the received sample on its resource,
the fading coefficients toward its connected VNs, and a noise variance. The
same machinery covers

* single-shot SCMA detection (one round),
* synchronous HARQ chase detection, where the graphs of all rounds so far
  are aggregated into one large graph (identical payloads, so one VN per
  user spans every round), and
* asynchronous windows, where already-decoded packets are subtracted from
  the received samples, dropped packets are folded into the FN noise
  variance, and the corresponding edges disappear.

Two kernels are provided: exact sum-product in the probability domain and
max-log in the log domain (the default for campaigns). Messages are
renormalized after every update (sum 1, respectively max 0); Gaussian
prefactors are dropped throughout since they cancel in every ratio.
"""

from dataclasses import dataclass, field

import numpy as np

LLR_MAX = 30.0

KERNELS = ("sum-product", "max-log")

# per-slot user-packet classification for async windows
DESIRED, RECOVERED, DISCARDED = 0, 1, 2


@dataclass
class FactorNode:
    """One (resource, slot) observation vectorized over the slot's channel uses."""

    resource: int
    slot: int
    users: tuple          # connected VN indices, ascending
    y: np.ndarray         # (n_uses,) complex residual received samples
    h: np.ndarray         # (n_uses, degree) complex fading toward `users`
    x: np.ndarray         # (degree, M) complex codeword entries of `users` here
    sigma2: float         # effective noise variance seen by this FN

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.complex128)
        self.h = np.asarray(self.h, dtype=np.complex128)
        self.x = np.asarray(self.x, dtype=np.complex128)
        d = len(self.users)
        if d == 0:
            raise ValueError("factor node with no connected users")
        if self.h.shape != (self.y.shape[0], d) or self.x.shape[0] != d:
            raise ValueError("inconsistent factor-node array shapes")
        if not self.sigma2 > 0:
            raise ValueError("factor-node noise variance must be positive")

    @property
    def degree(self):
        return len(self.users)


@dataclass
class FactorGraphInstance:
    """A detection problem: VNs 0..n_vns-1 plus a list of factor nodes."""

    n_vns: int
    M: int
    fns: list
    vn_neighbors: list = field(init=False)

    def __post_init__(self):
        uses = {fn.y.shape[0] for fn in self.fns}
        if len(uses) > 1:
            raise ValueError(f"factor nodes disagree on channel-use count: {uses}")
        self.n_uses = uses.pop() if uses else 0
        nbrs = [[] for _ in range(self.n_vns)]
        for i, fn in enumerate(self.fns):
            for j in fn.users:
                if not 0 <= j < self.n_vns:
                    raise ValueError(f"factor node references unknown VN {j}")
                nbrs[j].append(i)
        self.vn_neighbors = nbrs


@dataclass
class Marginals:
    """Per-VN codeword marginals; `domain` is 'prob' (sum 1) or 'log' (max 0)."""

    values: np.ndarray  # (n_vns, n_uses, M)
    domain: str


class BeliefState:
    """Message tables for one run: per-edge (n_uses, M) arrays in both directions.

    Probability-domain messages stay normalized to sum 1, log-domain messages
    shifted so their maximum entry is 0. Initialization is uniform.
    """

    def __init__(self, graph, mode):
        if mode not in KERNELS:
            raise ValueError(f"unknown kernel {mode!r}")
        self.mode = mode
        shape = (graph.n_uses, graph.M)
        init = np.full(shape, 1.0 / graph.M) if mode == "sum-product" else np.zeros(shape)
        self.vn_to_fn = {}
        self.fn_to_vn = {}
        for i, fn in enumerate(graph.fns):
            for j in fn.users:
                self.vn_to_fn[(j, i)] = init.copy()
                self.fn_to_vn[(i, j)] = init.copy()


def fn_log_metric(fn):
    """Log-likelihood tensor of shape (n_uses, M, ..., M), one axis per neighbor.

    Entry [u, m_1, ..., m_d] is -|y_u - sum_a h_u,a x_a[m_a]|^2 / sigma2.
    """
    d = fn.degree
    M = fn.x.shape[1]
    n = fn.y.shape[0]
    s = np.zeros((n,) + (M,) * d, dtype=np.complex128)
    for a in range(d):
        shape = [n] + [1] * d
        shape[1 + a] = M
        s = s + (fn.h[:, a, None] * fn.x[a][None, :]).reshape(shape)
    r = fn.y.reshape((n,) + (1,) * d) - s
    return -(r.real ** 2 + r.imag ** 2) / fn.sigma2


def _bcast(msg, axis, d):
    """Reshape an (n_uses, M) message to broadcast along combo axis `axis`."""
    n, M = msg.shape
    shape = [n] + [1] * d
    shape[1 + axis] = M
    return msg.reshape(shape)


def _normalize_prob(msg):
    tot = msg.sum(axis=-1, keepdims=True)
    # an all-underflowed row cannot occur for the full message set, but guard anyway
    safe = np.where(tot > 0, tot, 1.0)
    out = msg / safe
    out[np.squeeze(tot, -1) <= 0] = 1.0 / msg.shape[-1]
    return out


def _normalize_log(msg):
    return msg - msg.max(axis=-1, keepdims=True)


def fn_update(fn, incoming, mode, metric=None):
    """Messages from one FN to each of its neighbors.

    `incoming` lists the current VN->FN messages in `fn.users` order. In
    sum-product mode the local likelihood is multiplied by the incoming
    messages of all other neighbors and the joint is summed out; in max-log
    mode products become sums of log-messages and the sum becomes a max.
    """
    if metric is None:
        metric = fn_log_metric(fn)
    d = fn.degree
    axes = tuple(range(1, d + 1))
    out = []
    if mode == "sum-product":
        psi = np.exp(metric - metric.max(axis=axes, keepdims=True))
        for a in range(d):
            t = psi
            for b in range(d):
                if b != a:
                    t = t * _bcast(incoming[b], b, d)
            reduce_axes = tuple(ax for ax in axes if ax != 1 + a)
            out.append(_normalize_prob(t.sum(axis=reduce_axes)))
    elif mode == "max-log":
        for a in range(d):
            t = metric
            for b in range(d):
                if b != a:
                    t = t + _bcast(incoming[b], b, d)
            reduce_axes = tuple(ax for ax in axes if ax != 1 + a)
            out.append(_normalize_log(t.max(axis=reduce_axes) if reduce_axes else t))
    else:
        raise ValueError(f"unknown kernel {mode!r}")
    return out


def vn_update(incoming, mode):
    """Messages from one VN toward each neighbor: product of the other inputs.

    `incoming` lists the current FN->VN messages in neighbor order; a
    degree-1 VN emits the uniform message (empty product).
    """
    d = len(incoming)
    out = []
    for a in range(d):
        if mode == "sum-product":
            t = None
            for b in range(d):
                if b != a:
                    t = incoming[b] if t is None else t * incoming[b]
            if t is None:
                t = np.full_like(incoming[a], 1.0 / incoming[a].shape[-1])
            out.append(_normalize_prob(t))
        else:
            t = None
            for b in range(d):
                if b != a:
                    t = incoming[b] if t is None else t + incoming[b]
            if t is None:
                t = np.zeros_like(incoming[a])
            out.append(_normalize_log(t))
    return out


def run_mpa(graph, iterations, mode="max-log"):
    """Run flooding message passing and return per-VN codeword marginals.

    Each iteration updates every FN (from the previous VN messages), then
    every VN. The final marginal of a VN is the normalized product (log:
    shifted sum) of all messages it received in the last FN pass.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if mode not in KERNELS:
        raise ValueError(f"unknown kernel {mode!r}")
    state = BeliefState(graph, mode)
    metrics = [fn_log_metric(fn) for fn in graph.fns]
    for _ in range(iterations):
        for i, fn in enumerate(graph.fns):
            inc = [state.vn_to_fn[(j, i)] for j in fn.users]
            for j, msg in zip(fn.users, fn_update(fn, inc, mode, metrics[i])):
                state.fn_to_vn[(i, j)] = msg
        for j in range(graph.n_vns):
            nbrs = graph.vn_neighbors[j]
            inc = [state.fn_to_vn[(i, j)] for i in nbrs]
            for i, msg in zip(nbrs, vn_update(inc, mode)):
                state.vn_to_fn[(j, i)] = msg
    vals = np.empty((graph.n_vns, graph.n_uses, graph.M))
    for j in range(graph.n_vns):
        nbrs = graph.vn_neighbors[j]
        if mode == "sum-product":
            t = np.ones((graph.n_uses, graph.M))
            for i in nbrs:
                t = t * state.fn_to_vn[(i, j)]
            vals[j] = _normalize_prob(t)
        else:
            t = np.zeros((graph.n_uses, graph.M))
            for i in nbrs:
                t = t + state.fn_to_vn[(i, j)]
            vals[j] = _normalize_log(t)
    return Marginals(values=vals, domain="prob" if mode == "sum-product" else "log")


def bit_llrs(marginals, codebook):
    """Per-bit LLRs log(Pr(b=1)/Pr(b=0)) from codeword marginals.

    `codebook` may be a ScmaCodebook or a plain bits-per-symbol int. Output
    is (n_vns, n_uses * bits_per_symbol), use-major with the big-endian bit
    of each symbol first, clamped to +-LLR_MAX. Max-log marginals use the
    max-plus form (max over each bit half instead of the sum).
    """
    bps = codebook if isinstance(codebook, int) else codebook.bits_per_symbol
    vals = marginals.values
    M = vals.shape[-1]
    if M != 1 << bps:
        raise ValueError(f"marginal size {M} does not match 2^{bps}")
    idx = np.arange(M)
    out = np.empty(vals.shape[:2] + (bps,))
    with np.errstate(divide="ignore"):
        for l in range(bps):
            ones = (idx >> (bps - 1 - l)) & 1 == 1
            if marginals.domain == "prob":
                p1 = vals[..., ones].sum(axis=-1)
                p0 = vals[..., ~ones].sum(axis=-1)
                out[..., l] = np.log(p1) - np.log(p0)
            else:
                out[..., l] = vals[..., ones].max(axis=-1) - vals[..., ~ones].max(axis=-1)
    out = np.clip(out, -LLR_MAX, LLR_MAX)
    return out.reshape(vals.shape[0], -1)


def build_sync_graph(codebook, rounds, n0):
    """Aggregate the factor graphs of `rounds` chase transmissions.

    `rounds` is a list of (y, h) pairs, y shaped (n_uses, K) and h
    (n_uses, K, J); all rounds must carry the same codeword payload. Every
    round contributes K factor nodes (per channel use) wired by the codebook
    occupancy, so after q rounds each VN has degree q * d_v.
    """
    rounds = list(rounds)
    if not rounds:
        raise ValueError("empty round list")
    neighbors = codebook.indicator.neighbors_of_resource
    fns = []
    for q, (y, h) in enumerate(rounds):
        y = np.asarray(y)
        h = np.asarray(h)
        for k in range(codebook.K):
            users = neighbors[k]
            fns.append(FactorNode(
                resource=k, slot=q, users=users,
                y=y[:, k],
                h=h[:, k, list(users)],
                x=codebook.codewords[list(users), :, k],
                sigma2=float(n0)))
    return FactorGraphInstance(n_vns=codebook.J, M=codebook.M, fns=fns)


def effective_noise_variance(n0, resource, discarded, codebook):
    """FN noise variance when dropped packets on `resource` count as noise.

    Adds, for every discarded user, its average per-resource codeword energy
    (unit-power fading assumed). Empty set returns n0 exactly. Callers pass
    users that actually occupy the resource; others contribute zero energy.
    """
    energy = codebook.mean_resource_energy()
    return float(n0) + float(sum(energy[resource, j] for j in discarded))


@dataclass
class SlotView:
    """One window slot as the async graph builder consumes it.

    `status[j]` classifies the packet user j transmitted in this slot
    relative to the current detection target: DESIRED (still being decoded),
    RECOVERED (decoded earlier; cancelled using `recovered_indices[j]`), or
    DISCARDED (dropped after the final round; treated as noise).
    """

    y: np.ndarray                 # (n_uses, K)
    h: np.ndarray                 # (n_uses, K, J)
    status: np.ndarray            # (J,) int
    recovered_indices: dict = field(default_factory=dict)


def build_async_graph(codebook, slots, n0):
    """Build the edge-pruned factor graph of an asynchronous window.

    Per slot, recovered packets are subtracted from the received samples,
    factor nodes keep edges only toward desired packets, and discarded
    packets inflate the FN noise variance on the resources they occupy.
    Resources with no desired occupant in a slot contribute no factor node.
    With every packet desired this degenerates to `build_sync_graph`.
    """
    slots = list(slots)
    if not slots:
        raise ValueError("empty slot window")
    neighbors = codebook.indicator.neighbors_of_resource
    fns = []
    for t, slot in enumerate(slots):
        status = np.asarray(slot.status)
        cancelled = np.flatnonzero(status == RECOVERED)
        y = np.asarray(slot.y)
        if cancelled.size:
            y = y.copy()
            for j in cancelled:
                if j not in slot.recovered_indices:
                    raise ValueError(f"slot {t}: missing decoded codeword for recovered user {j}")
                x = codebook.codewords[j, np.asarray(slot.recovered_indices[j]), :]
                y -= slot.h[:, :, j] * x
        for k in range(codebook.K):
            users = tuple(j for j in neighbors[k] if status[j] == DESIRED)
            if not users:
                continue
            dropped = [j for j in neighbors[k] if status[j] == DISCARDED]
            fns.append(FactorNode(
                resource=k, slot=t, users=users,
                y=y[:, k],
                h=slot.h[:, k, list(users)],
                x=codebook.codewords[list(users), :, k],
                sigma2=effective_noise_variance(n0, k, dropped, codebook)))
    return FactorGraphInstance(n_vns=codebook.J, M=codebook.M, fns=fns)


def detect_slot(codebook, y, h, n0, iterations, kernel, presence=None):
    """Single-slot detection returning per-user coded-bit LLR vectors.

    `presence` is an optional (J, n_uses) boolean mask saying which users
    transmit at each channel use (shorter bursts are silent in the tail).
    Users transmit contiguous prefixes; user j's returned vector covers
    exactly its own transmitted uses. Without `presence` all users span the
    whole slot and the result is a (J, n_uses * bits_per_symbol) list.
    """
    y = np.asarray(y)
    h = np.asarray(h)
    n_uses = y.shape[0]
    if presence is None:
        graph = build_sync_graph(codebook, [(y, h)], n0)
        llr = bit_llrs(run_mpa(graph, iterations, kernel), codebook)
        return [llr[j] for j in range(codebook.J)]
    presence = np.asarray(presence, dtype=bool)
    neighbors = codebook.indicator.neighbors_of_resource
    chunks = [[] for _ in range(codebook.J)]
    start = 0
    while start < n_uses:
        pat = presence[:, start]
        end = start + 1
        while end < n_uses and (presence[:, end] == pat).all():
            end += 1
        active = np.flatnonzero(pat)
        if active.size:
            fns = []
            for k in range(codebook.K):
                users = tuple(j for j in neighbors[k] if pat[j])
                if not users:
                    continue
                fns.append(FactorNode(
                    resource=k, slot=0, users=users,
                    y=y[start:end, k],
                    h=h[start:end, k, list(users)],
                    x=codebook.codewords[list(users), :, k],
                    sigma2=float(n0)))
            graph = FactorGraphInstance(n_vns=codebook.J, M=codebook.M, fns=fns)
            llr = bit_llrs(run_mpa(graph, iterations, kernel), codebook)
            for j in active:
                chunks[j].append(llr[j])
        start = end
    return [np.concatenate(c) if c else np.empty(0) for c in chunks]

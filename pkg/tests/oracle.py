"""Independent reference computations the detector tests check against.

Everything here enumerates joint codeword assignments directly and never
calls the message-passing code paths, so agreement is meaningful.
"""

from itertools import product

import numpy as np

from harq_scma.detector import FactorGraphInstance, FactorNode


def _assignment_log_weight(graph, assign):
    """Sum of FN log-likelihoods for one joint assignment, per channel use."""
    total = np.zeros(graph.n_uses)
    for fn in graph.fns:
        s = np.zeros(graph.n_uses, dtype=np.complex128)
        for a, j in enumerate(fn.users):
            s += fn.h[:, a] * fn.x[a, assign[j]]
        r = fn.y - s
        total += -(np.abs(r) ** 2) / fn.sigma2
    return total


def brute_posterior_marginals(graph):
    """Exact posterior codeword marginals by M^n_vns enumeration; (V, U, M)."""
    M, V = graph.M, graph.n_vns
    weights = np.zeros((graph.n_uses, M ** V))
    assigns = list(product(range(M), repeat=V))
    for i, assign in enumerate(assigns):
        weights[:, i] = _assignment_log_weight(graph, assign)
    weights = np.exp(weights - weights.max(axis=1, keepdims=True))
    marg = np.zeros((V, graph.n_uses, M))
    for i, assign in enumerate(assigns):
        for j in range(V):
            marg[j, :, assign[j]] += weights[:, i]
    return marg / marg.sum(axis=2, keepdims=True)


def brute_max_metrics(graph):
    """Max over joint assignments of the summed log-likelihood, per (VN, symbol).

    This is the quantity max-log message passing tracks; returned shifted so
    each (VN, use) row has maximum 0, matching the detector's normalization.
    """
    M, V = graph.M, graph.n_vns
    best = np.full((V, graph.n_uses, M), -np.inf)
    for assign in product(range(M), repeat=V):
        w = _assignment_log_weight(graph, assign)
        for j in range(V):
            best[j, :, assign[j]] = np.maximum(best[j, :, assign[j]], w)
    return best - best.max(axis=2, keepdims=True)


def random_tree_graph(rng, M=4, n_uses=2, n_fns=5):
    """A random cycle-free detection problem with random complex parameters."""
    fns_spec = []  # (existing_vn, [new_vns])
    n_vns = 1
    for _ in range(n_fns):
        anchor = int(rng.integers(n_vns))
        extra = int(rng.integers(0, 3))
        new = list(range(n_vns, n_vns + extra))
        n_vns += extra
        fns_spec.append((anchor, new))
    fns = []
    for i, (anchor, new) in enumerate(fns_spec):
        users = tuple(sorted([anchor] + new))
        d = len(users)
        h = (rng.standard_normal((n_uses, d)) + 1j * rng.standard_normal((n_uses, d)))
        x = (rng.standard_normal((d, M)) + 1j * rng.standard_normal((d, M)))
        y = (rng.standard_normal(n_uses) + 1j * rng.standard_normal(n_uses))
        fns.append(FactorNode(resource=i, slot=0, users=users, y=y, h=h, x=x,
                              sigma2=float(rng.uniform(0.3, 2.0))))
    return FactorGraphInstance(n_vns=n_vns, M=M, fns=fns)


def graph_node_count(graph):
    return graph.n_vns + len(graph.fns)

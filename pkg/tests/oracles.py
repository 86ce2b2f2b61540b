"""Independent reference implementations used as test oracles.

These are deliberately naive: explicit loops over word tokens, tables and
topics, written from the model definition without reusing any package code.
"""

import math

from scipy.special import digamma, gammaln


def _stick_expectations(a, b):
    """E[log pi_t] for a truncated stick-breaking vector with Beta(a_t, b_t) breaks."""
    T = len(a) + 1
    out = []
    rest = 0.0
    for t in range(T):
        if t < T - 1:
            e_v = digamma(a[t]) - digamma(a[t] + b[t])
            out.append(e_v + rest)
            rest += digamma(b[t]) - digamma(a[t] + b[t])
        else:
            out.append(rest)
    return out


def _beta_expected_log_density(x_a, x_b, prior_a, prior_b):
    e_log = digamma(x_a) - digamma(x_a + x_b)
    e_log1m = digamma(x_b) - digamma(x_a + x_b)
    return (gammaln(prior_a + prior_b) - gammaln(prior_a) - gammaln(prior_b)
            + (prior_a - 1) * e_log + (prior_b - 1) * e_log1m)


def _beta_entropy(a, b):
    return -_beta_expected_log_density(a, b, a, b)


def _xlogx(p):
    return p * math.log(p) if p > 0 else 0.0


def document_bound(lam, u, v, gamma, alpha0, eta, doc_ids, doc_counts, a, b, zeta, psi, doc_count):
    """Per-document bound of a local HDP part model.

    ``lam`` is K x V (nested lists or arrays), ``u, v`` the K-1 corpus sticks,
    ``psi`` has one row per distinct word id (shared by its tokens).
    """
    K, V = len(lam), len(lam[0])
    T = len(zeta)
    elog_phi = [[digamma(lam[k][w]) - digamma(sum(lam[k])) for w in range(V)] for k in range(K)]
    elog_beta = _stick_expectations(u, v)
    elog_pi = _stick_expectations(a, b)

    # expand counts into individual word tokens
    tokens = []
    for row, (w, c) in enumerate(zip(doc_ids, doc_counts)):
        tokens.extend([(w, row)] * int(c))

    value = 0.0
    # E[log p(w | c, z, phi)]
    for w, row in tokens:
        for t in range(T):
            for k in range(K):
                value += psi[row][t] * zeta[t][k] * elog_phi[k][w]
    # E[log p(c | beta')] + H(q(c))
    for t in range(T):
        for k in range(K):
            value += zeta[t][k] * elog_beta[k] - _xlogx(zeta[t][k])
    # E[log p(z | pi')] + H(q(z))
    for w, row in tokens:
        for t in range(T):
            value += psi[row][t] * elog_pi[t] - _xlogx(psi[row][t])
    # E[log p(pi' | alpha0)] + H(q(pi'))
    for t in range(T - 1):
        value += _beta_expected_log_density(a[t], b[t], 1.0, alpha0) + _beta_entropy(a[t], b[t])

    # corpus share
    corpus = 0.0
    for k in range(K - 1):
        corpus += _beta_expected_log_density(u[k], v[k], 1.0, gamma) + _beta_entropy(u[k], v[k])
    for k in range(K):
        s = sum(lam[k])
        e_log_p = gammaln(V * eta) - V * gammaln(eta) + sum((eta - 1) * elog_phi[k][w] for w in range(V))
        entropy = -(gammaln(s) - sum(gammaln(x) for x in lam[k])
                    + sum((lam[k][w] - 1) * elog_phi[k][w] for w in range(V)))
        corpus += e_log_p + entropy
    return value + corpus / max(doc_count, 1)


def brute_force_miou(pred, gt, parts=None):
    """Mean IoU by explicit set construction."""
    if parts is None:
        parts = set(pred) | set(gt)
    ious = []
    for p in parts:
        in_pred = {i for i, x in enumerate(pred) if x == p}
        in_gt = {i for i, x in enumerate(gt) if x == p}
        union = in_pred | in_gt
        if union:
            ious.append(len(in_pred & in_gt) / len(union))
    return math.fsum(ious) / len(ious)

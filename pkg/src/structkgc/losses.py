"""Contrastive objectives over unit-norm features and structural scores.

The textual loss for one query is

    -log  e^{(cos(q, t+) - margin)/tau}
          -----------------------------------------------------------
          e^{(cos(q, t+) - margin)/tau} + sum_MH e^{cos/tau} + sum_D e^{cos/tau}

with D the union of unmasked in-batch tails and intra-relation tails;
the margin applies to the positive logit only.  The structural loss has
the same shape over structural scores with in-batch negatives only.
Batches reduce by the mean over queries.

Temperature is carried as a learnable log-temperature node, which makes
tau > 0 by construction; the clamp to the configured range happens after
each optimizer step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node


@dataclass
class LossConfig:
    tau_init: float = 0.05
    tau_min: float = 0.01
    tau_max: float = 1.0
    margin: float = 0.02
    beta: float = 0.5

    def __post_init__(self):
        if self.tau_init <= 0:
            raise ValueError(f"temperature must be positive, got {self.tau_init}")
        if not (0 < self.tau_min <= self.tau_init <= self.tau_max):
            raise ValueError(
                f"temperature {self.tau_init} outside clamp range "
                f"[{self.tau_min}, {self.tau_max}]"
            )
        if self.margin < 0:
            raise ValueError(f"margin must be non-negative, got {self.margin}")
        if self.beta < 0:
            raise ValueError(f"structural weight must be non-negative, got {self.beta}")


def make_log_tau(tau: float) -> Node:
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    return Node([[float(np.log(tau))]])


def clamp_log_tau(log_tau: Node, tau_min: float, tau_max: float):
    log_tau.value = np.clip(log_tau.value, np.log(tau_min), np.log(tau_max))


def _keep_matrix(mask: np.ndarray) -> Node:
    """0/1 constant marking in-batch entries that stay in the negative sum.

    ``mask`` is True for excluded entries (positives and false negatives);
    the diagonal is always excluded because the positive term is added
    separately.
    """
    keep = (~np.asarray(mask, dtype=bool)).astype(np.float64)
    np.fill_diagonal(keep, 0.0)
    return Node(keep)


def contrastive_loss(h_hr: Node, h_t: Node, ib_mask: np.ndarray,
                     log_tau: Node, margin: float,
                     mh_features=None, ir_features=None) -> Node:
    """Textual contrastive loss, mean over the batch.

    ``mh_features`` is an optional per-query list of constant (m, d)
    arrays of mixed hard negatives; ``ir_features`` an optional per-query
    list of (n, d) Nodes of intra-relation tail encodings (or None for a
    query with no extras).
    """
    n = h_hr.value.shape[0]
    if h_t.value.shape[0] != n or ib_mask.shape != (n, n):
        raise ValueError("batch sizes of features and mask must agree")
    inv_tau = ad.exp(ad.smul(log_tau, -1.0))
    cos_ib = ad.matmul(h_hr, ad.transpose(h_t))
    pos = ad.sum_axis(ad.mul(cos_ib, Node(np.eye(n))), axis=1)  # (n, 1)
    pos_logit = ad.mul(ad.add_const(pos, -margin), inv_tau)
    pos_exp = ad.exp(pos_logit)
    ib_sum = ad.sum_axis(
        ad.mul(ad.exp(ad.mul(cos_ib, inv_tau)), _keep_matrix(ib_mask)), axis=1
    )
    denom = ad.add(pos_exp, ib_sum)
    for extras in (mh_features, ir_features):
        if extras is None:
            continue
        rows = []
        for q in range(n):
            feats = extras[q]
            if feats is None or (hasattr(feats, "shape") and feats.shape[0] == 0):
                rows.append(Node([[0.0]]))
                continue
            feats_node = feats if isinstance(feats, Node) else Node(feats)
            logits = ad.matmul(ad.gather_rows(h_hr, [q]), ad.transpose(feats_node))
            rows.append(ad.sum_axis(ad.exp(ad.mul(logits, inv_tau)), axis=1))
        denom = ad.add(denom, ad.concat_rows(rows))
    per_query = ad.sub(ad.log(denom), pos_logit)
    return ad.mean_all(per_query)


def structural_loss(score_matrix: Node, ib_mask: np.ndarray,
                    log_tau: Node, margin: float) -> Node:
    """Structural contrastive loss over a (B, B) score matrix.

    Rows are queries, columns batch tails, the diagonal the positives;
    negatives are the unmasked in-batch entries only.
    """
    n = score_matrix.value.shape[0]
    if score_matrix.value.shape != (n, n) or ib_mask.shape != (n, n):
        raise ValueError("structural loss expects square scores and mask")
    inv_tau = ad.exp(ad.smul(log_tau, -1.0))
    pos = ad.sum_axis(ad.mul(score_matrix, Node(np.eye(n))), axis=1)
    pos_logit = ad.mul(ad.add_const(pos, -margin), inv_tau)
    neg_sum = ad.sum_axis(
        ad.mul(ad.exp(ad.mul(score_matrix, inv_tau)), _keep_matrix(ib_mask)),
        axis=1,
    )
    denom = ad.add(ad.exp(pos_logit), neg_sum)
    per_query = ad.sub(ad.log(denom), pos_logit)
    return ad.mean_all(per_query)


def total_loss(loss_cl: Node, loss_dis: Node, beta: float) -> Node:
    if beta < 0:
        raise ValueError(f"structural weight must be non-negative, got {beta}")
    return ad.add(loss_cl, ad.smul(loss_dis, beta))

"""Training objective: boundary loss, proposal map losses, weight penalty.

The boundary and map classification terms use a class-balanced logistic
loss: labels are binarized, then the positive and negative log-likelihoods
are reweighted by n/(2*n_pos) and n/(2*n_neg) so neither side dominates.
Predictions are clamped away from {0, 1} before taking logs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import torch
from torch import Tensor

PROB_EPS = 1e-6


@dataclass(frozen=True)
class LossBreakdown:
    """Scalar loss components, recorded per step or per epoch."""

    total: float
    boundary: float
    proposal: float
    cls: float
    com: float
    norm: float

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "L_b": self.boundary,
            "L_p": self.proposal,
            "L_cls": self.cls,
            "L_com": self.com,
            "L_norm": self.norm,
        }


def weighted_logistic_loss(
    probs: Tensor, targets: Tensor, binarize_thresh: float = 0.5
) -> Tensor:
    """Class-balanced binary logistic loss over flat prediction/target pairs.

    With b = 1(target > thresh), n+ = sum(b) and n- = n - n+:
    loss = -(1/n) * sum(a+ * b * log p + a- * (1-b) * log(1-p)) where
    a+ = n/(2 n+) and a- = n/(2 n-); an empty side contributes nothing.
    """
    if probs.shape != targets.shape:
        raise ValueError(f"shape mismatch {tuple(probs.shape)} vs {tuple(targets.shape)}")
    p = probs.reshape(-1).clamp(PROB_EPS, 1.0 - PROB_EPS)
    b = (targets.reshape(-1) > binarize_thresh).to(p.dtype)
    n = p.numel()
    if n == 0:
        return p.sum()  # zero, with grad flow
    n_pos = b.sum()
    n_neg = n - n_pos
    alpha_pos = torch.where(n_pos > 0, n / (2.0 * n_pos), torch.zeros_like(n_pos))
    alpha_neg = torch.where(n_neg > 0, n / (2.0 * n_neg), torch.zeros_like(n_neg))
    ll = alpha_pos * b * torch.log(p) + alpha_neg * (1.0 - b) * torch.log(1.0 - p)
    return -ll.sum() / n


def boundary_loss(
    p_start: Tensor,
    p_end: Tensor,
    g_start: Tensor,
    g_end: Tensor,
    binarize_thresh: float = 0.5,
) -> Tensor:
    """Mean of the start and end balanced logistic losses."""
    loss_s = weighted_logistic_loss(p_start, g_start, binarize_thresh)
    loss_e = weighted_logistic_loss(p_end, g_end, binarize_thresh)
    return 0.5 * (loss_s + loss_e)


def proposal_loss(
    m_cls: Tensor,
    m_com: Tensor,
    g_map: Tensor,
    valid: Tensor,
    lambda_com: float = 10.0,
    binarize_thresh: float = 0.5,
) -> tuple[Tensor, Tensor, Tensor]:
    """Map losses over valid anchors: balanced logistic + weighted MSE.

    Returns (combined, cls_term, com_term) with
    combined = cls_term + lambda_com * com_term.
    """
    if m_cls.shape != g_map.shape or m_com.shape != g_map.shape:
        raise ValueError("confidence maps and label map shapes differ")
    mask = valid.to(torch.bool)
    cls_term = weighted_logistic_loss(m_cls[mask], g_map[mask], binarize_thresh)
    diff = m_com[mask] - g_map[mask]
    com_term = (diff * diff).mean() if diff.numel() else diff.sum()
    return cls_term + lambda_com * com_term, cls_term, com_term


def weight_penalty(parameters: Iterable[Tensor]) -> Tensor:
    """Squared L2 norm over trainable parameters."""
    terms = [p.pow(2).sum() for p in parameters if p.requires_grad]
    if not terms:
        return torch.zeros(())
    return torch.stack(terms).sum()


def total_loss(
    boundary: Tensor,
    proposal: Tensor,
    penalty: Tensor,
    cls_term: Tensor,
    com_term: Tensor,
    lambda_reg: float = 2e-4,
) -> tuple[Tensor, LossBreakdown]:
    """Assemble the full objective and its scalar breakdown."""
    total = boundary + proposal + lambda_reg * penalty
    breakdown = LossBreakdown(
        total=float(total.detach()),
        boundary=float(boundary.detach()),
        proposal=float(proposal.detach()),
        cls=float(cls_term.detach()),
        com=float(com_term.detach()),
        norm=float(penalty.detach()),
    )
    return total, breakdown

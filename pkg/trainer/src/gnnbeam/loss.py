"""Differentiable rate/sensing objective for training.

Mirrors the scoring conventions of the solver pipeline: the effective
user channel folds the reflect path and the direct path, SINR counts
inter-user interference plus the probe leakage, and the beampattern
gain is h^H (W W^H + R0) h.  The training loss is the negative weighted
sum rate plus a hinged beampattern penalty.
"""

import torch


def effective_channels(batch, theta):
    """(h_cu, h_tgt) for a batch of scenes under phases theta."""
    Gc = batch["G"].conj()  # (B, N, M)
    h_cu = torch.einsum("bkn,bnm->bkm",
                        batch["h_ris_cu"] * theta.unsqueeze(1), Gc)
    h_cu = h_cu + batch["h_bs_cu"]
    h_tgt = torch.einsum("bln,bnm->blm",
                         batch["h_ris_tgt"] * theta.unsqueeze(1), Gc)
    return h_cu, h_tgt


def sinr(h_cu, W, r0_diag, noise):
    cross = torch.einsum("bkm,bmj->bkj", h_cu.conj(), W).abs() ** 2
    signal = torch.diagonal(cross, dim1=1, dim2=2)
    interference = cross.sum(dim=-1) - signal
    leak = torch.einsum("bkm,bm->bk", h_cu.abs() ** 2, r0_diag)
    return signal / (interference + leak + noise)


def beampattern(h_tgt, W, r0_diag):
    comm = (torch.einsum("blm,bmj->blj", h_tgt.conj(), W).abs() ** 2).sum(dim=-1)
    sense = torch.einsum("blm,bm->bl", h_tgt.abs() ** 2, r0_diag)
    return comm + sense


def objective_terms(batch, out):
    """Per-sample weighted sum rate and total beampattern deficit."""
    h_cu, h_tgt = effective_channels(batch, out["theta"])
    gamma = sinr(h_cu, out["W"], out["R0_diag"], batch["noise"])
    wsr = (batch["tau"] * torch.log2(1.0 + gamma)).sum(dim=-1)
    rho = beampattern(h_tgt, out["W"], out["R0_diag"])
    deficit = torch.relu(batch["rho_th"].unsqueeze(1) - rho).sum(dim=-1)
    return wsr, deficit


def training_loss(batch, out, beta):
    wsr, deficit = objective_terms(batch, out)
    return (-wsr + beta * deficit).mean()

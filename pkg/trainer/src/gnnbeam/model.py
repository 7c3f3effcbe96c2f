"""Heterogeneous graph model mapping CSI to beamforming variables.

One node per RIS panel, one per user, one per target.  All user nodes
share weights, all target nodes share weights, and every aggregation
over nodes of a kind is order-insensitive, so permuting users permutes
the emitted beams and leaves the phases and the probe covariance
untouched, exactly, not just in expectation.

Floating-point sums are not associative, so plain ``mean`` over a node
dimension would leak the input order into the last bits.  Aggregations
here sort each feature lane before reducing (the multiset is what gets
reduced), which makes the invariance bitwise.
"""

import numpy as np
import torch
from torch import nn

from .records import SchemaError


def _vec(mat):
    """Column-major flatten, the convention for stacked CSI blocks."""
    return np.asarray(mat).T.reshape(-1)


def _reim(arr):
    return np.concatenate([np.real(arr), np.imag(arr)], axis=-1)


def sample_inputs(sample, perfect_inputs=False, perfect_loss=False) -> dict:
    """Per-node raw features plus the channels the loss is scored on.

    The model sees ``sample.view(perfect_inputs)``; the loss channel set
    is chosen independently so training can fit noisy CSI while being
    judged on the exact links.
    """
    ch = sample.view(perfect_inputs)
    score = sample.view(perfect_loss)
    Gh = np.conj(ch["G"]).T  # (M, N)

    cu_mats = [
        np.concatenate([Gh * ch["h_ris_cu"][k][None, :],
                        ch["h_bs_cu"][k][:, None]], axis=1)
        for k in range(sample.K)
    ]  # each (M, N+1)
    tgt_mats = [Gh * ch["h_ris_tgt"][l][None, :] for l in range(sample.L)]

    return {
        "cu_slices": np.stack([_reim(Hk) for Hk in cu_mats]),
        "cu_flat": np.stack([_reim(_vec(Hk)) for Hk in cu_mats]),
        "tgt_slices": np.stack([_reim(Hl) for Hl in tgt_mats])
        if sample.L else np.zeros((0, sample.M, 2 * sample.N)),
        "tgt_flat": np.stack([_reim(_vec(Hl)) for Hl in tgt_mats])
        if sample.L else np.zeros((0, 2 * sample.M * sample.N)),
        "G": score["G"],
        "h_ris_cu": score["h_ris_cu"],
        "h_bs_cu": score["h_bs_cu"],
        "h_ris_tgt": score["h_ris_tgt"],
        "noise": sample.noise_var,
        "tau": sample.tau,
        "rho_th": sample.rho_th,
        "P0": sample.P0,
    }


_COMPLEX = ("G", "h_ris_cu", "h_bs_cu", "h_ris_tgt")


def collate(input_dicts) -> dict:
    """Stack per-sample inputs into one batch of torch tensors.

    Every sample must share (M, N, K, L); the model needs at least one
    user and one target node to aggregate over.
    """
    first = input_dicts[0]
    if first["cu_flat"].shape[0] < 1 or first["tgt_flat"].shape[0] < 1:
        raise SchemaError("model requires K >= 1 and L >= 1")
    batch = {}
    for key in first:
        mats = [d[key] for d in input_dicts]
        if any(np.shape(m) != np.shape(mats[0]) for m in mats):
            raise SchemaError(f"mixed shapes in batch at {key}")
        stacked = np.stack(mats)
        dtype = torch.complex128 if key in _COMPLEX else torch.float64
        batch[key] = torch.as_tensor(stacked, dtype=dtype)
    return batch


def _sorted_mean(x, dim):
    vals = torch.sort(x, dim=dim).values
    return vals.sum(dim=dim) / x.shape[dim]


def _sorted_sum(x, dim):
    return torch.sort(x, dim=dim).values.sum(dim=dim)


def _others_max(x):
    """Element-wise max over the other nodes, (B, K, F) -> (B, K, F).

    A node with no peers aggregates the zero vector.
    """
    K = x.shape[1]
    if K == 1:
        return torch.zeros_like(x)
    cols = []
    for k in range(K):
        rest = torch.cat([x[:, :k], x[:, k + 1:]], dim=1)
        cols.append(rest.max(dim=1).values)
    return torch.stack(cols, dim=1)


def _mlp(d_in, d_hidden, d_out):
    return nn.Sequential(nn.Linear(d_in, d_hidden), nn.ReLU(),
                         nn.Linear(d_hidden, d_out))


class BeamformingGNN(nn.Module):
    """Initial embedding, D rounds of message passing, beamforming readout.

    Feature widths grow by concatenation: after round d every node
    carries (d+1)*q features.  The readout emits unit-modulus phases, a
    learned communication/sensing power split (sigmoid, biased to start
    at 0.7), beams scaled to eps*P0 and a diagonal probe covariance
    scaled to (1-eps)*P0, so the power budget holds exactly for every
    forward pass.
    """

    def __init__(self, N, M, q=128, D=3):
        super().__init__()
        if q % 2:
            raise ValueError("feature width q must be even")
        if min(N, M, q, D) < 1:
            raise ValueError("N, M, q, D must be positive")
        self.N, self.M, self.q, self.D = N, M, q, D
        self.pair_cu = _mlp(2 * (N + 1), q, q // 2)
        self.pair_tgt = _mlp(2 * N, q, q // 2)
        self.node_cu = _mlp(2 * M * (N + 1), 2 * q, q)
        self.node_tgt = _mlp(2 * M * N, 2 * q, q)
        self.update_ris = nn.ModuleList(_mlp(3 * d * q, q, q) for d in range(1, D + 1))
        self.update_cu = nn.ModuleList(_mlp(3 * d * q, q, q) for d in range(1, D + 1))
        self.update_tgt = nn.ModuleList(_mlp(3 * d * q, q, q) for d in range(1, D + 1))
        self.out_ris = nn.Linear((D + 1) * q, 2 * N)
        self.out_cu = nn.Linear((D + 1) * q, 2 * M)
        self.out_tgt = nn.Linear((D + 1) * q, 2 * M)
        self.out_power = nn.Linear(2 * M, 1)
        with torch.no_grad():
            self.out_power.weight.zero_()
            self.out_power.bias.fill_(float(np.log(0.7 / 0.3)))
        self.register_buffer("in_scale", torch.ones(4, dtype=torch.float64))
        self.double()

    def set_input_scale(self, scales):
        vals = torch.as_tensor(scales, dtype=torch.float64).reshape(4)
        if torch.any(vals <= 0):
            raise ValueError("input scales must be positive")
        self.in_scale.copy_(vals)

    def forward(self, batch) -> dict:
        s = self.in_scale
        B, K = batch["cu_flat"].shape[:2]
        L = batch["tgt_flat"].shape[1]

        pc = self.pair_cu(batch["cu_slices"] / s[0])  # (B, K, M, q/2)
        pt = self.pair_tgt(batch["tgt_slices"] / s[1])
        r = torch.cat([_sorted_mean(pc.flatten(1, 2), 1),
                       _sorted_mean(pt.flatten(1, 2), 1)], dim=1)
        u = self.node_cu(batch["cu_flat"] / s[2])  # (B, K, q)
        t = self.node_tgt(batch["tgt_flat"] / s[3])

        for d in range(self.D):
            ru = r.unsqueeze(1)
            r_new = self.update_ris[d](
                torch.cat([r, _sorted_mean(u, 1), _sorted_mean(t, 1)], dim=-1))
            u_new = self.update_cu[d](
                torch.cat([u, _others_max(u), ru.expand(-1, K, -1)], dim=-1))
            t_new = self.update_tgt[d](
                torch.cat([t, _others_max(t), ru.expand(-1, L, -1)], dim=-1))
            r = torch.cat([r_new, r], dim=-1)
            u = torch.cat([u_new, u], dim=-1)
            t = torch.cat([t_new, t], dim=-1)

        N, M = self.N, self.M
        ris = self.out_ris(r)
        a, b = ris[:, :N], ris[:, N:]
        norm = torch.sqrt(a ** 2 + b ** 2)
        dark = norm == 0  # no preferred phase, park the element at 1
        safe = torch.where(dark, torch.ones_like(norm), norm)
        theta = torch.complex(torch.where(dark, torch.ones_like(a), a / safe),
                              torch.where(dark, torch.zeros_like(b), b / safe))

        uo = self.out_cu(u)  # (B, K, 2M)
        to = self.out_tgt(_sorted_mean(t, 1))  # (B, 2M)
        phi_power = _sorted_mean(torch.cat([uo, to.unsqueeze(1)], dim=1), 1)
        eps = torch.sigmoid(self.out_power(phi_power)).squeeze(-1)  # (B,)

        tiny = torch.finfo(torch.float64).tiny
        beams = _sorted_sum(uo.square().sum(dim=-1), 1).clamp_min(tiny)
        alpha_cu = torch.sqrt(eps * batch["P0"] / beams)
        W = alpha_cu[:, None, None] * torch.complex(
            uo[..., :M], uo[..., M:]).permute(0, 2, 1)  # (B, M, K)

        probe = to[..., :M] ** 2 + to[..., M:] ** 2  # (B, M)
        alpha_tgt = (1.0 - eps) * batch["P0"] / probe.sum(dim=-1).clamp_min(tiny)
        r0_diag = alpha_tgt[:, None] * probe

        return {"W": W, "R0_diag": r0_diag, "theta": theta, "eps": eps,
                "features": {"r": r, "u": u, "t": t}}

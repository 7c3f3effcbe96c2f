"""Unsupervised training loop and checkpoint handling.

The loss needs no labels: every batch is pushed through the model, the
rate/penalty objective is evaluated on the channels carried by the same
records, and Adam does the rest.  The tail 10% of the file (in file
order) is held out; the checkpoint kept is the one with the lowest
held-out loss, scored on the exact channels even when training fits
noisy ones.
"""

import time
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .loss import beampattern, effective_channels, training_loss
from .model import BeamformingGNN, collate, sample_inputs
from .records import GnnSolution, SchemaError

SENSING_SLACK = 1e-3  # relative, same slack the solver pipeline scores with


@dataclass
class TrainConfig:
    epochs: int
    q: int = 128
    D: int = 3
    beta: float = 200.0
    lr: float = 1e-3
    batch_size: int = 128
    seed: int = 0
    val_frac: float = 0.1
    perfect_csi: bool = False  # score the training loss on exact channels

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not 0.0 <= self.val_frac < 1.0:
            raise ValueError("val_frac must be in [0, 1)")


@dataclass
class TrainRun:
    loss_trace: list = field(default_factory=list)
    val_loss_trace: list = field(default_factory=list)
    satisfaction_trace: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = float("nan")
    seed: int = 0


def _check_uniform(samples):
    dims = {(s.M, s.N, s.K, s.L) for s in samples}
    if len(dims) != 1:
        raise SchemaError(f"training needs one (M, N, K, L) shape, found {sorted(dims)}")
    return dims.pop()


def input_scales(input_dicts) -> np.ndarray:
    """Root-mean-square of each raw input family, for standardization."""
    keys = ("cu_slices", "tgt_slices", "cu_flat", "tgt_flat")
    out = np.ones(4)
    for i, key in enumerate(keys):
        acc, count = 0.0, 0
        for d in input_dicts:
            acc += float(np.sum(np.asarray(d[key]) ** 2))
            count += np.asarray(d[key]).size
        if count and acc > 0:
            out[i] = np.sqrt(acc / count)
    return out


def _val_metrics(model, batch, beta):
    model.eval()
    with torch.no_grad():
        out = model(batch)
        loss = float(training_loss(batch, out, beta))
        _, h_tgt = effective_channels(batch, out["theta"])
        rho = beampattern(h_tgt, out["W"], out["R0_diag"])
        ok = rho.min(dim=1).values >= batch["rho_th"] * (1.0 - SENSING_SLACK)
        satisfaction = float(ok.double().mean())
    model.train()
    return loss, satisfaction


def train(samples, cfg: TrainConfig):
    """Fit a model to a list of CsiSamples; returns (model, TrainRun)."""
    if not samples:
        raise SchemaError("empty dataset")
    M, N, K, L = _check_uniform(samples)

    n = len(samples)
    n_val = int(round(cfg.val_frac * n))
    if cfg.val_frac > 0 and n >= 2:
        n_val = min(max(n_val, 1), n - 1)
    else:
        n_val = 0
    train_samples, val_samples = samples[: n - n_val], samples[n - n_val:]

    torch.manual_seed(cfg.seed)
    model = BeamformingGNN(N, M, q=cfg.q, D=cfg.D)
    train_inputs = [sample_inputs(s, perfect_loss=cfg.perfect_csi)
                    for s in train_samples]
    model.set_input_scale(input_scales(train_inputs))
    run = TrainRun(seed=cfg.seed)
    if cfg.epochs == 0:
        return model, run

    val_batch = None
    if val_samples:
        val_batch = collate([sample_inputs(s, perfect_loss=True)
                             for s in val_samples])

    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    best_state = None
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_inputs))
        total, seen = 0.0, 0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo: lo + cfg.batch_size]
            batch = collate([train_inputs[i] for i in idx])
            loss = training_loss(batch, model(batch), cfg.beta)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss.detach()) * len(idx)
            seen += len(idx)
        run.loss_trace.append(total / seen)

        if val_batch is not None:
            val_loss, satisfaction = _val_metrics(model, val_batch, cfg.beta)
            run.val_loss_trace.append(val_loss)
            run.satisfaction_trace.append(satisfaction)
            if not np.isfinite(run.best_val_loss) or val_loss < run.best_val_loss:
                run.best_val_loss = val_loss
                run.best_epoch = epoch
                best_state = {k: v.detach().clone()
                              for k, v in model.state_dict().items()}

    if best_state is not None:
        model.load_state_dict(best_state)
    return model, run


def save_checkpoint(path, model: BeamformingGNN, run: TrainRun):
    torch.save({
        "arch": {"N": model.N, "M": model.M, "q": model.q, "D": model.D},
        "state": model.state_dict(),
        "run": asdict(run),
    }, path)


def load_checkpoint(path):
    blob = torch.load(path, map_location="cpu", weights_only=True)
    arch = blob["arch"]
    model = BeamformingGNN(arch["N"], arch["M"], q=arch["q"], D=arch["D"])
    model.load_state_dict(blob["state"])
    model.eval()
    return model, blob["run"]


def infer(model: BeamformingGNN, samples, perfect=False, batch_size=256):
    """Forward passes over a dataset, one solution per record, file order.

    Node counts may differ from training (weight tying makes the layers
    size-agnostic); the panel and antenna counts may not.
    """
    solutions = []
    model.eval()
    pos = 0
    while pos < len(samples):
        group = [samples[pos]]
        while (len(group) < batch_size and pos + len(group) < len(samples)
               and (samples[pos + len(group)].K, samples[pos + len(group)].L)
               == (group[0].K, group[0].L)):
            group.append(samples[pos + len(group)])
        pos += len(group)
        for s in group:
            if (s.N, s.M) != (model.N, model.M):
                raise SchemaError(
                    f"checkpoint expects N={model.N}, M={model.M}, "
                    f"record {s.scenario_id!r} has N={s.N}, M={s.M}")
        t0 = time.perf_counter()
        batch = collate([sample_inputs(s, perfect_inputs=perfect) for s in group])
        with torch.no_grad():
            out = model(batch)
        per_record_ms = (time.perf_counter() - t0) * 1e3 / len(group)
        W = out["W"].numpy()
        diag = out["R0_diag"].numpy()
        theta = out["theta"].numpy()
        for i, s in enumerate(group):
            solutions.append(GnnSolution(
                scenario_id=s.scenario_id, W=W[i],
                R0=np.diag(diag[i]).astype(complex), theta=theta[i],
                runtime_ms=per_record_ms))
    return solutions

"""Reading solver datasets and writing solution files.

The interchange format is JSONL: one object per line, complex tensors
as ``{"re": [...], "im": [...]}`` nested lists in row-major order.
This module is the trainer's own implementation of that contract; it
deliberately shares no code with the solver package.
"""

import json
from dataclasses import dataclass, field

import numpy as np


class SchemaError(ValueError):
    pass


def _complex(obj, label, shape):
    if not isinstance(obj, dict) or "re" not in obj or "im" not in obj:
        raise SchemaError(f"{label}: expected an object with re/im arrays")
    try:
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj["im"], dtype=float)
    except (TypeError, ValueError):
        raise SchemaError(f"{label}: re/im are not numeric arrays") from None
    if re.shape != im.shape:
        raise SchemaError(f"{label}: re shape {re.shape} != im shape {im.shape}")
    arr = re + 1j * im
    if arr.size == 0 and int(np.prod(shape)) == 0:
        arr = arr.reshape(shape)
    if arr.shape != shape:
        raise SchemaError(f"{label}: expected shape {shape}, got {arr.shape}")
    return arr


@dataclass
class CsiSample:
    """One dataset row, decoded to plain arrays.

    ``channels`` holds the exact links (G, h_ris_cu, h_bs_cu, h_ris_tgt);
    ``noisy`` the imperfect copy when the dataset carries one.  Models
    consume ``view()``, scoring always happens on the exact channels.
    """

    scenario_id: str
    M: int
    N: int
    K: int
    L: int
    P0: float
    rho_th: float
    tau: np.ndarray
    noise_var: np.ndarray
    channels: dict
    noisy: dict | None = None
    sigma_e2: float | None = None

    def view(self, perfect=False) -> dict:
        if perfect or self.noisy is None:
            return self.channels
        return self.noisy


def _decode_links(obj, M, N, K, L, label):
    if not isinstance(obj, dict):
        raise SchemaError(f"{label}: expected an object")
    for key in ("G", "h_ris_cu", "h_bs_cu", "h_ris_tgt"):
        if key not in obj:
            raise SchemaError(f"{label}.{key}: missing")
    return {
        "G": _complex(obj["G"], f"{label}.G", (N, M)),
        "h_ris_cu": _complex(obj["h_ris_cu"], f"{label}.h_ris_cu", (K, N)),
        "h_bs_cu": _complex(obj["h_bs_cu"], f"{label}.h_bs_cu", (K, M)),
        "h_ris_tgt": _complex(obj["h_ris_tgt"], f"{label}.h_ris_tgt", (L, N)),
    }


def _decode_sample(obj) -> CsiSample:
    if not isinstance(obj, dict):
        raise SchemaError("expected an object")
    for key in ("scenario_id", "config", "channels"):
        if key not in obj:
            raise SchemaError(f"{key}: missing")
    cfg = obj["config"]
    if not isinstance(cfg, dict) or not isinstance(cfg.get("system"), dict):
        raise SchemaError("config: expected an object with a system block")
    try:
        M = int(cfg["system"]["M"])
        N = int(cfg["system"]["Nx"]) * int(cfg["system"]["Nz"])
        K, L = int(cfg["K"]), int(cfg["L"])
        P0, rho_th = float(cfg["P0"]), float(cfg["rho_th"])
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"config: {e}") from None
    if min(M, N, K) < 1 or L < 0:
        raise SchemaError(f"config: degenerate sizes M={M} N={N} K={K} L={L}")
    tau = cfg.get("tau")
    tau = np.ones(K) if tau is None else np.asarray(tau, dtype=float)
    if tau.shape != (K,):
        raise SchemaError(f"config.tau: expected {K} weights, got shape {tau.shape}")

    ch = obj["channels"]
    try:
        noise = np.asarray(ch["noise_var"], dtype=float).reshape(-1)
    except (KeyError, TypeError, ValueError):
        raise SchemaError("channels.noise_var: missing or not numeric") from None
    if noise.shape != (K,) or np.any(noise <= 0):
        raise SchemaError("channels.noise_var: expected K positive entries")

    noisy = obj.get("perturbed")
    sigma = obj.get("sigma_e2")
    if (noisy is None) != (sigma is None):
        raise SchemaError("perturbed and sigma_e2 come as a pair")
    return CsiSample(
        scenario_id=str(obj["scenario_id"]),
        M=M, N=N, K=K, L=L, P0=P0, rho_th=rho_th, tau=tau, noise_var=noise,
        channels=_decode_links(ch, M, N, K, L, "channels"),
        noisy=None if noisy is None else _decode_links(noisy, M, N, K, L, "perturbed"),
        sigma_e2=None if sigma is None else float(sigma),
    )


def read_csi(path) -> list:
    samples = []
    seen = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                raise SchemaError(f"line {lineno}: invalid JSON") from None
            try:
                sample = _decode_sample(obj)
            except SchemaError as e:
                raise SchemaError(f"line {lineno}: {e}") from None
            if sample.scenario_id in seen:
                raise SchemaError(f"line {lineno}: duplicate id {sample.scenario_id!r}")
            seen.add(sample.scenario_id)
            samples.append(sample)
    return samples


@dataclass
class GnnSolution:
    scenario_id: str
    W: np.ndarray
    R0: np.ndarray
    theta: np.ndarray
    runtime_ms: float = 0.0
    method: str = "gnn"
    iterations: int = 1

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=complex)
        self.R0 = np.asarray(self.R0, dtype=complex)
        self.theta = np.asarray(self.theta, dtype=complex).reshape(-1)
        if self.W.ndim != 2 or self.R0.shape != (self.W.shape[0],) * 2:
            raise SchemaError("solution: W must be (M, K) and R0 (M, M)")


def _enc(a):
    return {"re": np.real(a).tolist(), "im": np.imag(a).tolist()}


def write_solutions(path, solutions) -> int:
    count = 0
    with open(path, "w", newline="\n") as fh:
        for sol in solutions:
            obj = {
                "scenario_id": sol.scenario_id,
                "W": _enc(sol.W),
                "R0": _enc(sol.R0),
                "theta": _enc(sol.theta),
                "meta": {
                    "method": sol.method,
                    "runtime_ms": sol.runtime_ms,
                    "iterations": sol.iterations,
                },
            }
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")
            count += 1
    return count

"""JSONL dataset / solution files and the evaluation CSV.

One JSON object per line.  Complex tensors travel as
``{"re": [...], "im": [...]}`` nested lists in row-major order; floats
are written with Python's shortest round-trip representation, so a
write/read cycle reproduces every finite value bit for bit.  These
files are the interchange boundary with the learned-beamforming
trainer, which parses them without importing this package.
"""

import csv
import io
import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .channels import ChannelSet
from .errors import SchemaError
from .geometry import SystemConfig
from .metrics import BeamformingSolution
from .scenarios import ScenarioConfig


def _encode_complex(a: np.ndarray) -> dict:
    return {"re": np.real(a).tolist(), "im": np.imag(a).tolist()}


def _decode_complex(obj, label: str, shape: tuple | None = None) -> np.ndarray:
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
    if shape is not None:
        if arr.size == 0 and int(np.prod(shape)) == 0:
            arr = arr.reshape(shape)
        if arr.shape != shape:
            raise SchemaError(f"{label}: expected shape {shape}, got {arr.shape}")
    return arr


def _from_fields(cls, obj, label: str):
    """Strict dataclass construction from a JSON object."""
    if not isinstance(obj, dict):
        raise SchemaError(f"{label}: expected an object")
    names = {f.name for f in fields(cls)}
    missing = sorted(names - obj.keys())
    extra = sorted(obj.keys() - names)
    if missing:
        raise SchemaError(f"{label}: missing fields {missing}")
    if extra:
        raise SchemaError(f"{label}: unknown fields {extra}")
    try:
        return cls(**obj)
    except (ValueError, TypeError) as e:
        raise SchemaError(f"{label}: {e}") from None


def _decode_config(obj) -> ScenarioConfig:
    if not isinstance(obj, dict) or "system" not in obj:
        raise SchemaError("config: expected an object with a system block")
    obj = dict(obj)
    obj["system"] = _from_fields(SystemConfig, obj["system"], "config.system")
    return _from_fields(ScenarioConfig, obj, "config")


def _encode_channels(ch: ChannelSet) -> dict:
    return {
        "G": _encode_complex(ch.G),
        "h_ris_cu": _encode_complex(ch.h_ris_cu),
        "h_bs_cu": _encode_complex(ch.h_bs_cu),
        "h_ris_tgt": _encode_complex(ch.h_ris_tgt),
        "noise_var": np.asarray(ch.noise_var, dtype=float).tolist(),
    }


def _decode_channels(obj, cfg: ScenarioConfig, label: str) -> ChannelSet:
    if not isinstance(obj, dict):
        raise SchemaError(f"{label}: expected an object")
    N, M, K, L = cfg.system.n_elements, cfg.system.M, cfg.K, cfg.L
    for key in ("G", "h_ris_cu", "h_bs_cu", "h_ris_tgt", "noise_var"):
        if key not in obj:
            raise SchemaError(f"{label}.{key}: missing")
    try:
        nv = np.asarray(obj["noise_var"], dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise SchemaError(f"{label}.noise_var: not a numeric array") from None
    if nv.shape != (K,):
        raise SchemaError(f"{label}.noise_var: expected shape ({K},), got {nv.shape}")
    return ChannelSet(
        G=_decode_complex(obj["G"], f"{label}.G", (N, M)),
        h_ris_cu=_decode_complex(obj["h_ris_cu"], f"{label}.h_ris_cu", (K, N)),
        h_bs_cu=_decode_complex(obj["h_bs_cu"], f"{label}.h_bs_cu", (K, M)),
        h_ris_tgt=_decode_complex(obj["h_ris_tgt"], f"{label}.h_ris_tgt", (L, N)),
        noise_var=nv,
    )


@dataclass
class CsiRecord:
    """One dataset row: config snapshot, exact channels, optional noisy copy.

    ``perturbed`` and ``sigma_e2`` come as a pair or not at all; solvers
    that should work from imperfect CSI read ``perturbed``, scoring always
    uses ``channels``.
    """

    scenario_id: str
    config: ScenarioConfig
    channels: ChannelSet
    perturbed: ChannelSet | None = None
    sigma_e2: float | None = None

    def __post_init__(self):
        if (self.perturbed is None) != (self.sigma_e2 is None):
            raise SchemaError("perturbed channels and sigma_e2 must be given together")
        if self.sigma_e2 is not None and self.sigma_e2 < 0:
            raise SchemaError(f"sigma_e2 must be nonnegative, got {self.sigma_e2}")
        self._check_dims(self.channels, "channels")
        if self.perturbed is not None:
            self._check_dims(self.perturbed, "perturbed")

    def _check_dims(self, ch: ChannelSet, label: str):
        sys = self.config.system
        expect = {
            "G": (sys.n_elements, sys.M),
            "h_ris_cu": (self.config.K, sys.n_elements),
            "h_bs_cu": (self.config.K, sys.M),
            "h_ris_tgt": (self.config.L, sys.n_elements),
            "noise_var": (self.config.K,),
        }
        for name, shape in expect.items():
            got = getattr(ch, name).shape
            if got != shape:
                raise SchemaError(f"{label}.{name}: expected shape {shape}, got {got}")

    def solver_channels(self) -> ChannelSet:
        """What a CSI-limited solver gets to see."""
        return self.perturbed if self.perturbed is not None else self.channels


def _record_to_obj(rec: CsiRecord) -> dict:
    return {
        "scenario_id": rec.scenario_id,
        "config": asdict(rec.config),
        "channels": _encode_channels(rec.channels),
        "perturbed": None if rec.perturbed is None else _encode_channels(rec.perturbed),
        "sigma_e2": rec.sigma_e2,
    }


def _record_from_obj(obj) -> CsiRecord:
    if not isinstance(obj, dict):
        raise SchemaError("record: expected an object")
    for key in ("scenario_id", "config", "channels"):
        if key not in obj:
            raise SchemaError(f"{key}: missing")
    cfg = _decode_config(obj["config"])
    perturbed = obj.get("perturbed")
    sigma_e2 = obj.get("sigma_e2")
    if sigma_e2 is not None:
        try:
            sigma_e2 = float(sigma_e2)
        except (TypeError, ValueError):
            raise SchemaError(f"sigma_e2: expected a number, got {sigma_e2!r}") from None
    return CsiRecord(
        scenario_id=str(obj["scenario_id"]),
        config=cfg,
        channels=_decode_channels(obj["channels"], cfg, "channels"),
        perturbed=None if perturbed is None else _decode_channels(perturbed, cfg, "perturbed"),
        sigma_e2=sigma_e2,
    )


@dataclass
class SolutionRecord:
    """Beams for one scenario plus bookkeeping about how they were found."""

    scenario_id: str
    W: np.ndarray
    R0: np.ndarray
    theta: np.ndarray
    method: str
    runtime_ms: float
    iterations: int

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=complex)
        self.R0 = np.asarray(self.R0, dtype=complex)
        self.theta = np.asarray(self.theta, dtype=complex)
        if self.W.ndim != 2:
            raise SchemaError(f"W: expected a matrix, got shape {self.W.shape}")
        if self.R0.shape != (self.W.shape[0], self.W.shape[0]):
            raise SchemaError(
                f"R0: expected shape ({self.W.shape[0]}, {self.W.shape[0]}), "
                f"got {self.R0.shape}"
            )
        if self.theta.ndim != 1:
            raise SchemaError(f"theta: expected a vector, got shape {self.theta.shape}")

    def as_solution(self) -> BeamformingSolution:
        return BeamformingSolution(W=self.W, R0=self.R0, theta=self.theta)


def _solution_to_obj(rec: SolutionRecord) -> dict:
    return {
        "scenario_id": rec.scenario_id,
        "W": _encode_complex(rec.W),
        "R0": _encode_complex(rec.R0),
        "theta": _encode_complex(rec.theta),
        "meta": {
            "method": rec.method,
            "runtime_ms": rec.runtime_ms,
            "iterations": rec.iterations,
        },
    }


def _solution_from_obj(obj) -> SolutionRecord:
    if not isinstance(obj, dict):
        raise SchemaError("record: expected an object")
    for key in ("scenario_id", "W", "R0", "theta", "meta"):
        if key not in obj:
            raise SchemaError(f"{key}: missing")
    meta = obj["meta"]
    if not isinstance(meta, dict):
        raise SchemaError("meta: expected an object")
    for key in ("method", "runtime_ms", "iterations"):
        if key not in meta:
            raise SchemaError(f"meta.{key}: missing")
    return SolutionRecord(
        scenario_id=str(obj["scenario_id"]),
        W=_decode_complex(obj["W"], "W"),
        R0=_decode_complex(obj["R0"], "R0"),
        theta=_decode_complex(obj["theta"], "theta"),
        method=str(meta["method"]),
        runtime_ms=float(meta["runtime_ms"]),
        iterations=int(meta["iterations"]),
    )


def _write_jsonl(path, objs):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for obj in objs:
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def _read_jsonl(path, decode):
    """Yield decoded records, tagging every failure with its line number."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"{path}: line {lineno}: invalid JSON ({e.msg})") from None
            try:
                yield decode(obj)
            except SchemaError as e:
                raise SchemaError(f"{path}: line {lineno}: {e}") from None


def write_dataset(path, records) -> int:
    """Write CsiRecords as JSONL; scenario_id must be unique per file."""
    seen = set()

    def check(rec):
        if rec.scenario_id in seen:
            raise SchemaError(f"duplicate scenario_id '{rec.scenario_id}'")
        seen.add(rec.scenario_id)
        return _record_to_obj(rec)

    _write_jsonl(path, (check(rec) for rec in records))
    return len(seen)


def read_dataset(path):
    """Stream CsiRecords back, validating shapes and id uniqueness."""
    seen = set()
    for rec in _read_jsonl(path, _record_from_obj):
        if rec.scenario_id in seen:
            raise SchemaError(f"{path}: duplicate scenario_id '{rec.scenario_id}'")
        seen.add(rec.scenario_id)
        yield rec


def write_solutions(path, records) -> int:
    """Write SolutionRecords as JSONL.

    Duplicate scenario_ids are allowed here: one file may carry several
    methods' answers to the same scenario.
    """
    count = 0

    def gen():
        nonlocal count
        for rec in records:
            count += 1
            yield _solution_to_obj(rec)

    _write_jsonl(path, gen())
    return count


def read_solutions(path):
    yield from _read_jsonl(path, _solution_from_obj)


EVAL_CSV_COLUMNS = [
    "scenario_id",
    "method",
    "K",
    "L",
    "N",
    "P0",
    "sigma_e2",
    "wsr",
    "min_rho",
    "power_used",
    "feasible",
    "runtime_ms",
]


@dataclass
class EvalRow:
    """One scored (scenario, method) pair, ready for the CSV."""

    scenario_id: str
    method: str
    K: int
    L: int
    N: int
    P0: float
    sigma_e2: float
    wsr: float
    min_rho: float
    power_used: float
    feasible: bool
    runtime_ms: float


def export_eval_csv(rows, path=None) -> str:
    """Render EvalRows as CSV (header always present, LF endings).

    Returns the CSV text; writes it to ``path`` when one is given.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EVAL_CSV_COLUMNS)
    for r in rows:
        writer.writerow([
            r.scenario_id,
            r.method,
            int(r.K),
            int(r.L),
            int(r.N),
            float(r.P0),
            float(r.sigma_e2),
            float(r.wsr),
            float(r.min_rho),
            float(r.power_used),
            "true" if r.feasible else "false",
            float(r.runtime_ms),
        ])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text

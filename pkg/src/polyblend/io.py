"""Run configuration and file formats: diagnostics CSV, ``.fld`` snapshots, PGM previews."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .diagnostics import RECORD_FIELDS, DiagnosticsRecord
from .dynamics import (CONSERVED, CONSTANT_PLUS_NOISE, FROM_SNAPSHOT, OFF_CRITICAL, TWO_MODE,
                       ModelParams, State, StepperConfig)
from .potential import PotentialParams
from .spectral import Grid


class ConfigError(ValueError):
    pass


class SnapshotError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class ScheduleConfig:
    t_end: float = 1.0
    diag_every: int = 100
    snapshot_every: int = 0
    stationarity_tol: float = 1e-8
    max_steps: int = 10_000_000


@dataclass(frozen=True)
class InitConfig:
    kind: str = CONSTANT_PLUS_NOISE
    u_mean: float = 0.0
    v_mean: float = 0.0
    amplitude: float = 0.05
    seed: int = 0
    snapshot: str = ""


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    formats: tuple = ("csv", "fld", "pgm")


@dataclass(frozen=True)
class RunConfig:
    grid: Grid
    model: ModelParams
    stepper: StepperConfig
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    init: InitConfig = field(default_factory=InitConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


_POTENTIAL_KEYS = ("theta_u", "theta_0u", "theta_v", "theta_0v", "alpha", "beta", "gamma", "delta")

# key -> (type, default)
DEFAULTS = {
    "grid.nx": (int, 64),
    "grid.ny": (int, 64),
    "grid.lx": (float, 1.0),
    "grid.ly": (float, 1.0),
    "model.eps_u_sq": (float, 1e-3),
    "model.eps_v_sq": (float, 1e-3),
    "model.sigma": (float, 0.5),
    "model.c": (float, 0.0),
    "model.mode": (str, CONSERVED),
    "model.theta_u": (float, 1.0),
    "model.theta_0u": (float, 2.0),
    "model.theta_v": (float, 1.0),
    "model.theta_0v": (float, 2.0),
    "model.alpha": (float, 0.0),
    "model.beta": (float, 0.0),
    "model.gamma": (float, 0.0),
    "model.delta": (float, 1e-3),
    "stepper.dt": (float, 1e-4),
    "stepper.kappa_u": (float, None),
    "stepper.kappa_v": (float, None),
    "stepper.max_retries": (int, 8),
    "stepper.recompute_interval": (int, 1),
    "stepper.guard": (bool, True),
    "schedule.t_end": (float, 1.0),
    "schedule.diag_every": (int, 100),
    "schedule.snapshot_every": (int, 0),
    "schedule.stationarity_tol": (float, 1e-8),
    "schedule.max_steps": (int, 10_000_000),
    "init.kind": (str, CONSTANT_PLUS_NOISE),
    "init.u_mean": (float, 0.0),
    "init.v_mean": (float, 0.0),
    "init.amplitude": (float, 0.05),
    "init.seed": (int, 0),
    "init.snapshot": (str, ""),
    "output.directory": (str, "out"),
    "output.formats": (list, ["csv", "fld", "pgm"]),
}

_CHOICES = {
    "model.mode": (CONSERVED, OFF_CRITICAL),
    "init.kind": (CONSTANT_PLUS_NOISE, TWO_MODE, FROM_SNAPSHOT),
}


def _convert(key: str, raw: str, lineno: int):
    typ = DEFAULTS[key][0]
    where = f"line {lineno}: {key}" if lineno else key
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            val = float(raw)
            if val != int(val):
                raise ValueError(raw)
            return int(val)
        if typ is float:
            if raw.lower() in ("auto", "none") and DEFAULTS[key][1] is None:
                return None
            return float(raw)
        if typ is list:
            return [x.strip() for x in raw.split(",") if x.strip()]
        if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
            raw = raw[1:-1]
        return raw
    except ValueError:
        raise ConfigError(f"{where}: expected {typ.__name__}, got {raw!r}") from None


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse flat ``section.key = value`` text into a validated :class:`RunConfig`.

    ``#`` starts a comment. Unknown keys, malformed values and violated model
    invariants raise :class:`ConfigError` naming the key (and line, when known).
    """
    values = {k: d for k, (_, d) in DEFAULTS.items()}
    lines = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (x.strip() for x in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw, lineno)
        lines[key] = lineno
    for key, raw in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _convert(key, str(raw), 0)
    return _build(values, lines)


def _build(values: dict, lines: dict) -> RunConfig:
    def fail(key, msg):
        where = f"line {lines[key]}: {key}" if key in lines else key
        raise ConfigError(f"{where}: {msg}")

    for key, choices in _CHOICES.items():
        if values[key] not in choices:
            fail(key, f"must be one of {', '.join(choices)}, got {values[key]!r}")

    v = values
    if not abs(v["model.c"]) < 1:
        fail("model.c", f"need |c| < 1, got {v['model.c']}")
    for r in ("u", "v"):
        th, th0 = f"model.theta_{r}", f"model.theta_0{r}"
        if not 0 < v[th] < v[th0]:
            key = th if th in lines else th0
            fail(key, f"need 0 < theta_{r} < theta_0{r}, got {v[th]} and {v[th0]}")
    if not 0 < v["model.delta"] < 1:
        fail("model.delta", f"need 0 < delta < 1, got {v['model.delta']}")
    for key in ("model.eps_u_sq", "model.eps_v_sq"):
        if not v[key] > 0:
            fail(key, f"must be > 0, got {v[key]}")
    if not v["model.sigma"] >= 0:
        fail("model.sigma", f"must be >= 0, got {v['model.sigma']}")
    for key in ("grid.nx", "grid.ny"):
        if v[key] < 8:
            fail(key, f"must be >= 8, got {v[key]}")
    for key in ("grid.lx", "grid.ly", "stepper.dt", "schedule.t_end"):
        if not v[key] > 0:
            fail(key, f"must be > 0, got {v[key]}")
    for key in ("schedule.diag_every", "schedule.snapshot_every", "stepper.max_retries"):
        if v[key] < 0:
            fail(key, f"must be >= 0, got {v[key]}")
    for key in ("schedule.max_steps", "stepper.recompute_interval"):
        if v[key] < 1:
            fail(key, f"must be >= 1, got {v[key]}")
    for key in ("stepper.kappa_u", "stepper.kappa_v"):
        if v[key] is not None and not v[key] >= 0:
            fail(key, f"must be >= 0 or auto, got {v[key]}")
    if not v["schedule.stationarity_tol"] > 0:
        fail("schedule.stationarity_tol", f"must be > 0, got {v['schedule.stationarity_tol']}")
    bad = set(v["output.formats"]) - {"csv", "fld", "pgm"}
    if bad:
        fail("output.formats", f"unknown formats {sorted(bad)}")
    if v["init.kind"] == FROM_SNAPSHOT and not v["init.snapshot"]:
        fail("init.snapshot", "required when init.kind = from_snapshot")
    if v["init.kind"] != FROM_SNAPSHOT:
        lim = 1.0 - 2.0 * v["model.delta"]
        for key in ("init.u_mean", "init.v_mean"):
            if abs(v[key]) + v["init.amplitude"] > lim:
                fail(key, f"|mean| + amplitude must be <= 1 - 2*delta = {lim:g}")
        if v["init.amplitude"] < 0:
            fail("init.amplitude", "must be >= 0")

    try:
        pot = PotentialParams(**{k: v[f"model.{k}"] for k in _POTENTIAL_KEYS})
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None
    return RunConfig(
        grid=Grid(v["grid.nx"], v["grid.ny"], v["grid.lx"], v["grid.ly"]),
        model=ModelParams(v["model.eps_u_sq"], v["model.eps_v_sq"], v["model.sigma"], v["model.c"],
                          v["model.mode"], pot),
        stepper=StepperConfig(v["stepper.dt"], v["stepper.kappa_u"], v["stepper.kappa_v"],
                              v["stepper.max_retries"], v["stepper.recompute_interval"], v["stepper.guard"]),
        schedule=ScheduleConfig(v["schedule.t_end"], v["schedule.diag_every"], v["schedule.snapshot_every"],
                                v["schedule.stationarity_tol"], v["schedule.max_steps"]),
        init=InitConfig(v["init.kind"], v["init.u_mean"], v["init.v_mean"], v["init.amplitude"],
                        v["init.seed"], v["init.snapshot"]),
        output=OutputConfig(v["output.directory"], tuple(v["output.formats"])),
    )


def load_config(path, overrides: dict | None = None) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), overrides)


# ---------------------------------------------------------------------------
# diagnostics CSV

def _fmt(x: float) -> str:
    return format(x, ".17g")


def write_diagnostics_csv(records, path) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow([_fmt(getattr(r, name)) for name in RECORD_FIELDS])


class DiagnosticsWriter:
    """Streaming CSV sink: header on open, one row per record, flushed per row."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="", encoding="ascii")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(RECORD_FIELDS)

    def __call__(self, rec: DiagnosticsRecord) -> None:
        self._w.writerow([_fmt(getattr(rec, name)) for name in RECORD_FIELDS])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_diagnostics_csv(path) -> list[DiagnosticsRecord]:
    with open(path, newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != RECORD_FIELDS:
        raise ValueError(f"{path}: unexpected header {rows[0] if rows else None}")
    return [DiagnosticsRecord(*(float(x) for x in row)) for row in rows[1:]]


# ---------------------------------------------------------------------------
# .fld snapshots

MAGIC = "FLD1"


def write_snapshot(s: State, path) -> None:
    g = s.grid
    header = f"{MAGIC} {g.nx} {g.ny} {_fmt(g.lx)} {_fmt(g.ly)} {_fmt(s.t)}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(s.u, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(s.v, dtype="<f8").tobytes())


def read_snapshot(path) -> State:
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise SnapshotError(f"{path}: missing header line")
    parts = data[:nl].decode("ascii", errors="replace").split()
    if len(parts) != 6 or parts[0] != MAGIC:
        raise SnapshotError(f"{path}: bad magic or header {data[:nl][:40]!r}")
    try:
        nx, ny = int(parts[1]), int(parts[2])
        lx, ly, t = float(parts[3]), float(parts[4]), float(parts[5])
    except ValueError:
        raise SnapshotError(f"{path}: malformed header") from None
    body = data[nl + 1:]
    expected = 2 * nx * ny * 8
    if len(body) != expected:
        raise SnapshotError(f"{path}: size mismatch, expected {expected} payload bytes, found {len(body)}")
    arr = np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(2, nx, ny)
    if not np.all(np.isfinite(arr)) or not math.isfinite(t):
        raise SnapshotError(f"{path}: non-finite values")
    return State(Grid(nx, ny, lx, ly), arr[0].copy(), arr[1].copy(), t)


# ---------------------------------------------------------------------------
# PGM preview

def write_pgm(f, path) -> None:
    """8-bit binary PGM; ``[-1, 1]`` maps affinely onto ``[0, 255]``, clamped.

    Image width is ``nx`` (the x axis), height ``ny``.
    """
    f = np.asarray(f, dtype=float)
    nx, ny = f.shape
    pix = np.floor((np.clip(f, -1.0, 1.0) + 1.0) * 127.5 + 0.5).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(pix.T).tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode("ascii"))
    if tokens[0] != "P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    pix = np.frombuffer(data[pos + 1:], dtype=np.uint8)
    return pix.reshape(h, w).T


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p


def config_fields(cfg: RunConfig) -> dict:
    """Flat ``section.key -> value`` view of a config (for logs and sweep manifests)."""
    out = {}
    for section in ("schedule", "init", "output", "stepper"):
        obj = getattr(cfg, section)
        for f in fields(obj):
            out[f"{section}.{f.name}"] = getattr(obj, f.name)
    out.update({"grid.nx": cfg.grid.nx, "grid.ny": cfg.grid.ny, "grid.lx": cfg.grid.lx, "grid.ly": cfg.grid.ly})
    m = cfg.model
    for name in ("eps_u_sq", "eps_v_sq", "sigma", "c", "mode"):
        out[f"model.{name}"] = getattr(m, name)
    for name in _POTENTIAL_KEYS:
        out[f"model.{name}"] = getattr(m.potential, name)
    return out

"""Run configuration, CNS2 snapshot files and diagnostics CSV."""
from __future__ import annotations

import csv
import difflib
import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .integrate import DIAGNOSTIC_COLUMNS, RENORMALIZE, SCHEMES, IntegratorConfig
from .spectral import (
    GridSpec,
    SpectralScalar,
    SpectralVector,
    _expand,
    project_to_manifold,
    random_smooth_field,
    taylor_green,
)

MAGIC = b"CNS2"
VERSION = 1
_HEADER = struct.Struct("<4sIIddI")

DEFAULT_LADDER = (0.2, 0.1, 0.05, 0.025, 0.0125)
REQUIRED_RUN = ("n", "nu", "dt", "horizon")


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class InitialCondition:
    kind: str = "random"          # taylor_green | random | from_file | zero
    seed: int = 7
    decay_rate: float = 3.0
    path: str | None = None

    def build(self, grid: GridSpec, normalize: bool = True) -> SpectralVector:
        if self.kind == "taylor_green":
            u = taylor_green(grid)
        elif self.kind == "random":
            u = random_smooth_field(self.seed, self.decay_rate, grid)
        elif self.kind == "from_file":
            snap = read_snapshot(self.path)
            if snap.n != grid.n:
                raise ConfigError(f"snapshot {self.path} has n={snap.n}, config has n={grid.n}")
            u = snap.field
            if not isinstance(u, SpectralVector):
                raise ConfigError("initial-condition snapshot must hold a velocity field")
        elif self.kind == "zero":
            if normalize:
                raise ConfigError("the zero initial condition cannot be normalized onto the unit sphere")
            return SpectralVector(grid, np.zeros((2,) + grid.shape, dtype=np.complex128))
        else:
            raise ConfigError(f"unknown initial condition {self.kind!r}")
        return project_to_manifold(u) if normalize else u


@dataclass(frozen=True)
class RunConfig:
    n: int = 32
    nu: float = 0.1
    dt: float = 1e-3
    horizon: float = 1.0
    scheme: str = "if_rk4"
    renormalize: str = "monitor_only"
    dealias_fraction: float = 2.0 / 3.0
    initial_condition: InitialCondition = field(default_factory=InitialCondition)
    output_dir: str = "cns2d_out"
    snapshot_stride: int = 100
    check_cfl: bool = True
    nu_list: tuple = DEFAULT_LADDER
    epsilon: float = 0.5
    quad_nodes: int = 33
    max_iters: int = 60
    embedding_samples: int = 100
    samples: int = 100

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.n, self.dealias_fraction)

    def integrator(self, **over) -> IntegratorConfig:
        kw = dict(dt=self.dt, horizon=self.horizon, scheme=self.scheme, renormalize=self.renormalize,
                  snapshot_stride=self.snapshot_stride, check_cfl=self.check_cfl)
        kw.update(over)
        return IntegratorConfig(**kw)

    def initial_field(self, normalize: bool = True) -> SpectralVector:
        return self.initial_condition.build(self.grid, normalize)

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **kw)


_NUMBER = (int, float)
_FIELDS = {
    "n": int, "nu": _NUMBER, "dt": _NUMBER, "horizon": _NUMBER, "scheme": str, "renormalize": str,
    "dealias_fraction": _NUMBER, "initial_condition": (str, dict), "output_dir": str,
    "snapshot_stride": int, "check_cfl": bool, "nu_list": list, "epsilon": _NUMBER,
    "quad_nodes": int, "max_iters": int, "embedding_samples": int, "samples": int,
}
_IC_FIELDS = {"type": str, "seed": int, "decay_rate": _NUMBER, "path": str}
_ALIASES = {"viscosity": "nu", "viscocity": "nu", "visc": "nu", "grid": "n", "resolution": "n",
            "T": "horizon", "t_final": "horizon", "timestep": "dt", "time_step": "dt", "stride": "snapshot_stride"}


def _suggest(key: str, known) -> str:
    if key in _ALIASES:
        return _ALIASES[key]
    close = difflib.get_close_matches(key, list(known) + list(_ALIASES), n=1, cutoff=0.5)
    if close:
        return _ALIASES.get(close[0], close[0])
    return ""


def _unknown(key, known, where="config"):
    hint = _suggest(key, known)
    msg = f"unknown {where} key {key!r}"
    if hint:
        msg += f"; did you mean {hint!r}?"
    return ConfigError(msg)


def _typed(key, value, kind):
    if kind is bool:
        ok = isinstance(value, bool)
    elif isinstance(value, bool):
        ok = False
    else:
        ok = isinstance(value, kind)
    if not ok:
        names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise ConfigError(f"key {key!r} must be of type {names}, got {type(value).__name__}")
    return value


def _parse_ic(raw) -> InitialCondition:
    if isinstance(raw, str):
        raw = {"type": raw}
    for k, v in raw.items():
        if k not in _IC_FIELDS:
            raise _unknown(k, _IC_FIELDS, "initial_condition")
        _typed(f"initial_condition.{k}", v, _IC_FIELDS[k])
    kind = raw.get("type")
    if kind is None:
        raise ConfigError("initial_condition needs a 'type'")
    if kind not in ("taylor_green", "random", "from_file", "zero"):
        raise ConfigError(f"initial_condition.type {kind!r} must be taylor_green, random, from_file or zero")
    if kind == "from_file" and "path" not in raw:
        raise ConfigError("initial_condition of type from_file needs 'path'")
    seed = raw.get("seed", 7)
    if seed < 0 or seed >= 2**64:
        raise ConfigError("initial_condition.seed must be an unsigned 64-bit integer")
    decay = float(raw.get("decay_rate", 3.0))
    if decay <= 2:
        raise ConfigError("initial_condition.decay_rate must exceed 2")
    return InitialCondition(kind, int(seed), decay, raw.get("path"))


def config_from_dict(raw: dict, required=REQUIRED_RUN, base_dir: Path | None = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    for k in raw:
        if k not in _FIELDS:
            raise _unknown(k, _FIELDS)
    missing = [k for k in required if k not in raw]
    if missing:
        raise ConfigError(f"missing required key {missing[0]!r}")
    kw = {}
    for k, v in raw.items():
        _typed(k, v, _FIELDS[k])
        kw[k] = v
    for k in ("nu", "dt", "horizon", "dealias_fraction", "epsilon"):
        if k in kw:
            kw[k] = float(kw[k])
    for k in ("dt", "horizon"):
        if k in kw and not kw[k] > 0:
            raise ConfigError(f"{k!r} must be positive, got {kw[k]}")
    if "nu" in kw and kw["nu"] < 0:
        raise ConfigError(f"'nu' must be nonnegative, got {kw['nu']}")
    if "n" in kw and (kw["n"] < 4 or kw["n"] % 2):
        raise ConfigError(f"'n' must be an even integer >= 4, got {kw['n']}")
    if "dealias_fraction" in kw and not 0 < kw["dealias_fraction"] <= 1:
        raise ConfigError("'dealias_fraction' must lie in (0, 1]")
    if "scheme" in kw and kw["scheme"] not in SCHEMES:
        raise ConfigError(f"'scheme' must be one of {SCHEMES}, got {kw['scheme']!r}")
    if "renormalize" in kw and kw["renormalize"] not in RENORMALIZE:
        raise ConfigError(f"'renormalize' must be one of {RENORMALIZE}, got {kw['renormalize']!r}")
    for k in ("snapshot_stride", "quad_nodes", "max_iters", "embedding_samples", "samples"):
        if k in kw and kw[k] < 1:
            raise ConfigError(f"{k!r} must be a positive integer")
    if "epsilon" in kw and not 0 < kw["epsilon"] < 1:
        raise ConfigError("'epsilon' must lie in (0, 1)")
    if "nu_list" in kw:
        lad = kw["nu_list"]
        if not lad or not all(isinstance(x, _NUMBER) and not isinstance(x, bool) and x > 0 for x in lad):
            raise ConfigError("'nu_list' must be a non-empty list of positive numbers")
        if any(b >= a for a, b in zip(lad, lad[1:])):
            raise ConfigError("'nu_list' must be strictly decreasing")
        kw["nu_list"] = tuple(float(x) for x in lad)
    if "initial_condition" in kw:
        ic = _parse_ic(kw["initial_condition"])
        if ic.path is not None and base_dir is not None and not Path(ic.path).is_absolute():
            ic = replace(ic, path=str(base_dir / ic.path))
        kw["initial_condition"] = ic
    return RunConfig(**kw)


def parse_config(path, required=REQUIRED_RUN) -> RunConfig:
    """Strict JSON config; unknown keys are rejected with a suggestion."""
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    try:
        raw = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from None
    return config_from_dict(raw, required, p.parent)


# ---------------------------------------------------------------- snapshots


@dataclass
class Snapshot:
    n: int
    nu: float
    time: float
    field: object
    version: int = VERSION


def _ordered_indices(n: int) -> np.ndarray:
    return np.arange(-n // 2 + 1, n // 2 + 1) % n


def _to_file_order(half: np.ndarray, n: int) -> np.ndarray:
    idx = _ordered_indices(n)
    return _expand(half, n)[np.ix_(idx, idx)]


def _from_file_order(block: np.ndarray, n: int) -> np.ndarray:
    # rows/cols of the block are k = -n/2+1 .. n/2; keep k2 = 0 .. n/2
    half = np.empty((n, n // 2 + 1), dtype=np.complex128)
    rows = _ordered_indices(n)
    half[rows, :] = block[:, n // 2 - 1:]
    return half


def write_snapshot(path, u, nu: float, time: float) -> None:
    """Write a SpectralVector (two components) or SpectralScalar (one)."""
    if isinstance(u, SpectralVector):
        comps = [u.coeffs[0], u.coeffs[1]]
    elif isinstance(u, SpectralScalar):
        comps = [u.coeffs]
    else:
        raise TypeError("snapshot field must be a SpectralVector or SpectralScalar")
    n = u.grid.n
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, float(nu), float(time), len(comps)))
        for c in comps:
            full = _to_file_order(c, n)
            pairs = np.empty((n, n, 2), dtype="<f8")
            pairs[..., 0] = full.real
            pairs[..., 1] = full.imag
            fh.write(pairs.tobytes(order="C"))


def read_snapshot(path, grid: GridSpec | None = None) -> Snapshot:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, n, nu, time, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    if count not in (1, 2):
        raise ValueError(f"{path}: component count {count} not supported")
    need = _HEADER.size + count * n * n * 16
    if len(data) != need:
        raise ValueError(f"{path}: expected {need} bytes, found {len(data)}")
    arr = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(count, n, n, 2)
    halves = [_from_file_order(a[..., 0] + 1j * a[..., 1], n) for a in arr]
    grid = grid or GridSpec(n)
    if grid.n != n:
        raise ValueError(f"{path}: snapshot n={n} does not match grid n={grid.n}")
    fld = SpectralVector(grid, np.stack(halves)) if count == 2 else SpectralScalar(grid, halves[0])
    return Snapshot(n, nu, time, fld, version)


# ------------------------------------------------------------- diagnostics


def write_diagnostics(path, rows) -> None:
    """CSV with a header; floats in shortest round-trip form."""
    rows = np.asarray(rows, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DIAGNOSTIC_COLUMNS)
        for r in rows:
            w.writerow([repr(float(x)) for x in r])


def read_diagnostics(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if tuple(header) != DIAGNOSTIC_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = [[float(x) for x in r] for r in rd if r]
    return np.array(rows, dtype=np.float64).reshape(-1, len(DIAGNOSTIC_COLUMNS))

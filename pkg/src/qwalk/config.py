"""Experiment configuration: JSON files resolved into walk definitions.

A config is a JSON object.  Complex numbers are written as ``[re, im]`` pairs
(plain numbers are accepted for real values).  Any key may be overridden per
run through a ``"sweep"`` list of partial configs, each of which yields one
run with its own label.

Example::

    {
      "label": "hadamard-1d",
      "dimension": 1,
      "topology": "diagonal_2c_pow_d",
      "coin": {"family": "one_d", "alpha": 0.0, "beta": 0.0},
      "initial_coin_state": [[0.7071067811865476, 0], [0, 0.7071067811865476]],
      "steps": 2000,
      "grid": "auto"
    }
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import coins
from .errors import ConfigError, DimensionMismatch, FileIOError, WalkDefinitionError
from .walk import CoinOperator, ShiftSet, WalkSpec

TOPOLOGIES = ("diagonal_2c_pow_d", "axial_2d")
ENGINES = ("direct", "fourier", "both")
TAIL_POLICIES = ("none", "power_law_extrapolation")

_KNOWN_KEYS = {
    "label", "dimension", "topology", "coin", "initial_coin_state", "steps", "grid",
    "engine", "seed", "records", "threads", "spectral_grid", "fit_window", "tail_policy",
    "approximate", "output", "sweep", "description",
}


@dataclass
class ExperimentConfig:
    """One fully resolved run."""

    label: str
    spec: WalkSpec
    steps: int
    grid: Any = "auto"
    engine: str = "fourier"
    seed: int = 0
    records: int = 100_000
    threads: Any = "auto"
    spectral_grid: int = 128
    fit_window: Optional[tuple] = None
    tail_policy: str = "power_law_extrapolation"
    approximate: bool = False
    output: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def N(self):
        return None if self.grid == "auto" else int(self.grid)

    def config_hash(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: dict) -> str:
    text = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def parse_complex(value, where: str) -> complex:
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number or [re, im]", where)
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in value):
        return complex(value[0], value[1])
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", "").replace("i", "j"))
        except ValueError:
            pass
    raise ConfigError(f"{where}: cannot read {value!r} as a complex number", where)


def parse_matrix(rows, where: str) -> np.ndarray:
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise ConfigError(f"{where}: matrix must be a list of rows", where)
    m = np.array([[parse_complex(x, f"{where}[{i}][{j}]") for j, x in enumerate(r)]
                  for i, r in enumerate(rows)], dtype=object)
    if m.ndim != 2:
        raise ConfigError(f"{where}: rows have different lengths", where)
    return m.astype(np.complex128)


_ENTRY = re.compile(r"\[[^\]]*\]|[^\s,]+")


def read_matrix_file(path, base: Optional[Path] = None) -> np.ndarray:
    """Matrix file: one row per line; entries ``re+imj`` or ``[re, im]``."""
    p = Path(path)
    if base is not None and not p.is_absolute():
        p = base / p
    try:
        text = p.read_text()
    except OSError as exc:
        raise FileIOError(f"cannot read matrix file {p}: {exc}") from exc
    rows = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        row = []
        for tok in _ENTRY.findall(line):
            if tok.startswith("["):
                try:
                    pair = json.loads(tok)
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"{p}:{n}: bad entry {tok!r}", "coin.file") from exc
                row.append(parse_complex(pair, f"{p}:{n}"))
            else:
                row.append(parse_complex(tok, f"{p}:{n}"))
        rows.append(row)
    if not rows or len({len(r) for r in rows}) != 1:
        raise ConfigError(f"{p}: matrix rows are missing or of unequal length", "coin.file")
    return np.array(rows, dtype=np.complex128)


def _coin(obj, d: int, base: Optional[Path], where="coin") -> CoinOperator:
    if isinstance(obj, list):
        return CoinOperator(parse_matrix(obj, where))
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object", where)
    if "matrix" in obj:
        return CoinOperator(parse_matrix(obj["matrix"], f"{where}.matrix"))
    if "file" in obj:
        return CoinOperator(read_matrix_file(obj["file"], base))
    fam = obj.get("family")
    if fam in ("one_d", "1d"):
        return coins.coin_1d(float(obj.get("alpha", 0.0)), float(obj.get("beta", 0.0)))
    if fam == "hadamard":
        return coins.hadamard()
    if fam == "grover":
        return coins.coin_grover_2d()
    if fam == "fourier":
        return coins.coin_fourier_2d()
    if fam == "identity":
        return coins.identity_coin(int(obj["size"]))
    if fam == "tensor":
        factors = obj.get("factors")
        if not isinstance(factors, list) or len(factors) < 2:
            raise ConfigError(f"{where}.factors: need a list of at least two coins", f"{where}.factors")
        return coins.coin_tensor([_coin(f, 1, base, f"{where}.factors[{i}]")
                                  for i, f in enumerate(factors)])
    raise ConfigError(f"{where}.family: unknown coin family {fam!r}", f"{where}.family")


def _shifts(topology, d: int) -> ShiftSet:
    if isinstance(topology, str):
        if topology == "diagonal_2c_pow_d":
            return ShiftSet.diagonal(d)
        if topology == "axial_2d":
            return ShiftSet.axial(d)
        raise ConfigError(f"topology: unknown topology {topology!r}", "topology")
    if isinstance(topology, dict) and "shifts" in topology:
        return ShiftSet(np.array(topology["shifts"]))
    if isinstance(topology, list):
        return ShiftSet(np.array(topology))
    raise ConfigError("topology: expected a name or {\"shifts\": [...]}", "topology")


def _initial_state(obj, c: int) -> np.ndarray:
    where = "initial_coin_state"
    if isinstance(obj, list):
        return np.array([parse_complex(x, f"{where}[{i}]") for i, x in enumerate(obj)])
    if not isinstance(obj, dict) or "named" not in obj:
        raise ConfigError(f"{where}: expected a vector or {{\"named\": ...}}", where)
    name = obj["named"]
    if name == "grover_exceptional":
        return coins.state_grover_exceptional()
    if name == "fourier_family":
        a = parse_complex(obj.get("a"), f"{where}.a")
        b = parse_complex(obj.get("b"), f"{where}.b")
        return coins.state_fourier_family(a, b)
    if name == "basis":
        i = obj.get("index")
        if not isinstance(i, int) or not 0 <= i < c:
            raise ConfigError(f"{where}.index: need an integer in [0, {c - 1}]", f"{where}.index")
        v = np.zeros(c, dtype=np.complex128)
        v[i] = 1.0
        return v
    raise ConfigError(f"{where}.named: unknown state {name!r}", f"{where}.named")


def _require(raw: dict, key: str):
    if key not in raw:
        raise ConfigError(f"missing required field {key!r}", key)
    return raw[key]


def resolve(raw: dict, base: Optional[Path] = None) -> ExperimentConfig:
    """Turn one (non-sweep) config dict into an :class:`ExperimentConfig`."""
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown field {key!r}", key)
    d = _require(raw, "dimension")
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        raise ConfigError("dimension: must be a positive integer", "dimension")
    steps = _require(raw, "steps")
    if not isinstance(steps, int) or isinstance(steps, bool) or steps < 0:
        raise ConfigError("steps: must be a non-negative integer", "steps")
    grid = raw.get("grid", "auto")
    if grid != "auto" and (not isinstance(grid, int) or isinstance(grid, bool) or grid < 1):
        raise ConfigError("grid: must be \"auto\" or a positive integer", "grid")
    engine = raw.get("engine", "fourier")
    if engine not in ENGINES:
        raise ConfigError(f"engine: must be one of {ENGINES}", "engine")
    tail = raw.get("tail_policy", "power_law_extrapolation")
    if tail not in TAIL_POLICIES:
        raise ConfigError(f"tail_policy: must be one of {TAIL_POLICIES}", "tail_policy")
    window = raw.get("fit_window")
    if window is not None:
        if not (isinstance(window, list) and len(window) == 2 and all(isinstance(x, int) for x in window)):
            raise ConfigError("fit_window: expected [t_min, t_max]", "fit_window")
        window = tuple(window)
    threads = raw.get("threads", "auto")
    if threads != "auto" and (not isinstance(threads, int) or threads < 1):
        raise ConfigError("threads: must be \"auto\" or a positive integer", "threads")
    for key in ("seed", "records", "spectral_grid"):
        if key in raw and (not isinstance(raw[key], int) or isinstance(raw[key], bool)):
            raise ConfigError(f"{key}: must be an integer", key)
    if raw.get("records", 1) < 1:
        raise ConfigError("records: must be at least 1", "records")
    if raw.get("spectral_grid", 8) < 4:
        raise ConfigError("spectral_grid: must be at least 4", "spectral_grid")
    output = raw.get("output", {})
    if not isinstance(output, dict):
        raise ConfigError("output: expected an object of paths", "output")

    field_name = "topology"
    try:
        shifts = _shifts(raw.get("topology", "diagonal_2c_pow_d"), d)
        if shifts.d != d:
            raise ConfigError(f"topology: shift vectors have dimension {shifts.d}, expected {d}",
                              "topology")
        field_name = "coin"
        coin = _coin(_require(raw, "coin"), d, base)
        if coin.size != shifts.c:
            raise DimensionMismatch(f"coin is {coin.size} x {coin.size} but the topology has "
                                    f"{shifts.c} shift vectors")
        field_name = "initial_coin_state"
        psi = _initial_state(_require(raw, "initial_coin_state"), shifts.c)
        spec = WalkSpec(shifts, coin, psi, raw.get("label", ""))
    except WalkDefinitionError as exc:
        # keep the domain error class (and exit code) but name the field
        exc.field = field_name
        raise

    return ExperimentConfig(
        label=str(raw.get("label", "")), spec=spec, steps=steps, grid=grid, engine=engine,
        seed=int(raw.get("seed", 0)), records=int(raw.get("records", 100_000)), threads=threads,
        spectral_grid=int(raw.get("spectral_grid", 128)), fit_window=window, tail_policy=tail,
        approximate=bool(raw.get("approximate", False)), output=dict(output), raw=raw)


def expand(raw: dict) -> list:
    """Split a config with a ``"sweep"`` list into one raw dict per run."""
    if "sweep" not in raw:
        return [raw]
    sweep = raw["sweep"]
    if not isinstance(sweep, list) or not sweep:
        raise ConfigError("sweep: expected a non-empty list of overrides", "sweep")
    base = {k: v for k, v in raw.items() if k != "sweep"}
    runs = []
    for i, override in enumerate(sweep):
        if not isinstance(override, dict) or "sweep" in override:
            raise ConfigError(f"sweep[{i}]: expected an object without nested sweeps", f"sweep[{i}]")
        run = copy.deepcopy(base)
        run.update(copy.deepcopy(override))
        if "label" not in override:
            run["label"] = f"{base.get('label', 'run')}-{i}"
        runs.append(run)
    return runs


def load(path) -> tuple:
    """Read a config file.  Returns (raw dict, list of ExperimentConfig)."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise FileIOError(f"cannot read config {p}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc.msg} at line {exc.lineno})", None) from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{p}: top level must be an object", None)
    return raw, [resolve(r, p.parent) for r in expand(raw)]

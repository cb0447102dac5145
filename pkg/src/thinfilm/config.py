"""Flat ``key = value`` run configuration.

Lines starting with ``#`` and blank lines are ignored.  Unknown keys and
out-of-range values raise :class:`ConfigError` (exit code 2).
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import os
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, OutputError

H0_BUILTINS = {"strip": ("wedge", "wedge_perturbed"), "disk": ("cap", "cap_perturbed")}
G_BUILTINS = ("contact", "steep")


@dataclass
class RunConfig:
    domain: str = "strip"
    N: int = 2
    Nx: int = 16
    M: int = 32
    grading_q: float = 2.0
    dt: float = 0.025
    T: float = 0.1
    gamma: float = 0.5
    newton_tol: float = 1e-8
    max_newton: int = 20
    picard_tol: float = 1e-8
    max_picard: int = 30
    bc: str = "neumann"
    h0: str = "builtin:wedge"
    g: str = "builtin:contact"
    output_dir: str = "out"
    seed: int = 0
    slope: float = 0.1
    method: str = "direct"
    # provenance, filled by the loader
    source: str = dataclasses.field(default="<defaults>", compare=False)
    digest: str = dataclasses.field(default="", compare=False)

    @property
    def nslabs(self) -> int:
        return int(round(self.T / self.dt))

    def keys(self):
        return [f.name for f in fields(self) if f.name not in ("source", "digest")]

    def echo(self) -> str:
        return "\n".join(f"{k} = {getattr(self, k)!r}" for k in self.keys()) + "\n"

    def validate(self) -> "RunConfig":
        bad = []
        if self.domain not in ("strip", "disk"):
            bad.append("domain must be strip or disk")
        if self.domain == "strip" and self.N not in (1, 2, 3):
            bad.append("N must be 1, 2 or 3 on the strip")
        if self.domain == "disk" and self.N != 2:
            bad.append("the disk needs N = 2")
        if self.Nx < 8 or self.M < 8:
            bad.append("Nx and M must be at least 8")
        if not 1.0 <= self.grading_q <= 4.0:
            bad.append("grading_q must lie in [1, 4]")
        if not (self.T > 0 and self.dt > 0 and self.dt <= self.T):
            bad.append("need 0 < dt <= T")
        elif abs(self.T / self.dt - self.nslabs) > 1e-9 * max(1, self.nslabs):
            bad.append("T must be an integer multiple of dt")
        if not 0 < self.gamma < 1:
            bad.append("gamma must lie in (0, 1)")
        if not (self.newton_tol > 0 and self.picard_tol > 0):
            bad.append("tolerances must be positive")
        if self.max_newton < 1 or self.max_picard < 1:
            bad.append("iteration limits must be positive")
        if self.bc not in ("neumann", "dirichlet"):
            bad.append("bc must be neumann or dirichlet")
        if not self.slope > 0:
            bad.append("slope must be positive")
        if self.method not in ("direct", "picard", "krylov"):
            bad.append("method must be direct, picard or krylov")
        for key in ("h0", "g"):
            kind, _, arg = getattr(self, key).partition(":")
            if kind not in ("builtin", "csv") or not arg:
                bad.append(f"{key} must be builtin:<name> or csv:<path>")
        kind, _, name = self.h0.partition(":")
        if kind == "builtin" and self.domain in H0_BUILTINS and name not in H0_BUILTINS[self.domain]:
            bad.append(f"unknown h0 builtin {name!r} for {self.domain}")
        kind, _, name = self.g.partition(":")
        if kind == "builtin" and name not in G_BUILTINS:
            bad.append(f"unknown g builtin {name!r}")
        if bad:
            raise ConfigError("; ".join(bad))
        return self


def _convert(name, text, typ):
    try:
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {text!r}") from exc


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    cfg = RunConfig()
    types = {f.name: type(f.default) for f in fields(cfg)}
    for k in ("source", "digest"):
        types.pop(k)
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        setattr(cfg, key, _convert(key, value, types[key]))
    cfg.source = source
    cfg.digest = hashlib.sha256(text.encode()).hexdigest()
    return cfg.validate()


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise OutputError(f"cannot read config {path}: {exc}") from exc
    cfg = parse_config(text, os.path.abspath(path))
    base = os.path.dirname(os.path.abspath(path))
    for key in ("h0", "g"):
        kind, _, arg = getattr(cfg, key).partition(":")
        if kind == "csv" and not os.path.isabs(arg):
            setattr(cfg, key, f"csv:{os.path.join(base, arg)}")
    return cfg


def read_table(path: str) -> tuple[list, np.ndarray]:
    """Header and float body of a CSV file."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc
    try:
        return rows[0], np.array(rows[1:], dtype=float)
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed numeric table") from exc


def table_on_grid(path: str, coords: list, shape: tuple, tol: float = 1e-9) -> np.ndarray:
    """Values of a coordinate table laid out on ``coords`` (row-major)."""
    _, body = read_table(path)
    n = int(np.prod(shape))
    if body.ndim != 2 or body.shape != (n, len(coords) + 1):
        raise ConfigError(f"{path}: expected {n} rows of {len(coords) + 1} columns")
    for k, c in enumerate(coords):
        if np.max(np.abs(body[:, k] - np.ravel(c))) > tol:
            raise ConfigError(f"{path}: column {k + 1} does not match the grid nodes")
    return body[:, -1].reshape(shape)

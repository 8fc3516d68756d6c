"""Run configuration: a flat ``key = value`` format with three sections.

    [model]
    dim = 1
    kappa = 1
    beta = 1
    # optional jump rows "z_1 .. z_d weight"; nearest neighbour if absent
    1 0.5
    -1 0.5

    [run]
    horizon = 10
    window = 5
    replicas = 100
    seed = 42
    cap = 10000000

    [output]
    format = csv
    precision = 12

Lines before the first header belong to ``[model]``.  ``#`` starts a comment.
"""

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

from .errors import JumpLawError, ParseError, ValidationError
from .gw_analytics import BranchingParams
from .lattice_kernel import simple_random_walk, validate_jump_distribution

SECTIONS = ("model", "run", "output")


def _int(text):
    return int(text)


def _float(text):
    return float(Fraction(text)) if "/" in text else float(text)


def _opt_str(text):
    return text or None


_KEYS = {
    "model": {"dim": _int, "kappa": _float, "beta": _float, "mu": _float},
    "run": {"horizon": _float, "window": _int, "replicas": _int, "seed": _int,
            "cap": _int, "threads": _int},
    "output": {"format": str, "path": _opt_str, "precision": _int},
}


@dataclass(frozen=True)
class RunConfig:
    dim: int = 1
    kappa: float = 1.0
    beta: float = 1.0
    mu: float | None = None
    jumps: tuple | None = None  # ((offset, weight), ...) or None for nearest neighbour
    horizon: float = 1.0
    window: int = 0
    replicas: int = 1
    seed: int = 0
    cap: int = 10**7
    threads: int | None = None
    format: str = "csv"
    path: str | None = None
    precision: int = 12
    lines: dict = field(default_factory=dict, compare=False, repr=False)

    def jump_distribution(self):
        try:
            if self.jumps is None:
                return simple_random_walk(self.dim, self.kappa)
            return validate_jump_distribution(self.jumps, self.dim, self.kappa)
        except JumpLawError as exc:
            raise ValidationError(str(exc), kind=type(exc).__name__,
                                  line=self.lines.get("jumps"), field="jumps") from exc

    def branching(self):
        return BranchingParams(self.beta, self.mu)

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        return _validated(replace(self, **kw)) if kw else self


def _validated(cfg):
    def bad(fld, msg, kind="ValueError"):
        raise ValidationError(msg, kind=kind, line=cfg.lines.get(fld), field=fld)

    if cfg.dim < 1:
        bad("dim", "dim must be >= 1")
    if not (cfg.kappa > 0 and math.isfinite(cfg.kappa)):
        bad("kappa", "kappa must be positive")
    if not (cfg.beta >= 0 and math.isfinite(cfg.beta)):
        bad("beta", "beta must be nonnegative")
    if cfg.mu is not None and cfg.mu != cfg.beta:
        bad("mu", f"branching must be critical: mu={cfg.mu} differs from beta={cfg.beta}",
            kind="CriticalityError")
    if cfg.horizon < 0:
        bad("horizon", "horizon must be nonnegative")
    if cfg.window < 0:
        bad("window", "window must be nonnegative")
    if cfg.replicas < 1:
        bad("replicas", "replicas must be >= 1")
    if cfg.seed < 0:
        bad("seed", "seed must be nonnegative")
    if cfg.cap < 1:
        bad("cap", "cap must be >= 1")
    if cfg.format not in ("csv", "json"):
        bad("format", f"format must be csv or json, got {cfg.format!r}")
    if not 1 <= cfg.precision <= 17:
        bad("precision", "precision must lie in 1..17")
    cfg.jump_distribution()
    return cfg


def parse_config(text):
    """Parse and validate; errors name the offending line and field."""
    values, lines, jumps = {}, {}, []
    section = "model"
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(f"malformed section header {raw.strip()!r}", line=lineno)
            section = line[1:-1].strip().lower()
            if section not in SECTIONS:
                raise ParseError(f"unknown section [{section}]", line=lineno, field=section)
            continue
        if "=" in line:
            key, _, val = (s.strip() for s in line.partition("="))
            key = key.lower()
            conv = _KEYS[section].get(key)
            if conv is None:
                raise ParseError(f"unknown key {key!r} in [{section}]", line=lineno, field=key)
            if key in values:
                raise ParseError(f"duplicate key {key!r}", line=lineno, field=key)
            try:
                values[key] = conv(val)
            except (ValueError, ZeroDivisionError):
                raise ParseError(f"cannot read {key} from {val!r}", line=lineno, field=key) from None
            lines[key] = lineno
            continue
        if section != "model":
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        parts = line.split()
        try:
            offset = tuple(int(p) for p in parts[:-1])
            weight = _float(parts[-1])
        except (ValueError, ZeroDivisionError):
            raise ParseError(f"bad jump row {raw.strip()!r}", line=lineno, field="jumps") from None
        if not offset:
            raise ParseError(f"jump row needs an offset and a weight: {raw.strip()!r}",
                             line=lineno, field="jumps")
        jumps.append((offset, weight, lineno))
        lines.setdefault("jumps", lineno)

    dim = values.get("dim", len(jumps[0][0]) if jumps else 1)
    for offset, _, lineno in jumps:
        if len(offset) != dim:
            raise ParseError(f"jump row has {len(offset)} coordinates, dim is {dim}",
                             line=lineno, field="jumps")
    seen = set()
    for offset, _, lineno in jumps:
        if offset in seen:
            raise ParseError(f"duplicate jump offset {offset}", line=lineno, field="jumps")
        seen.add(offset)
    values["dim"] = dim
    cfg = RunConfig(**values, jumps=tuple((o, w) for o, w, _ in jumps) or None, lines=lines)
    return _validated(cfg)


def serialize_config(cfg):
    """Canonical text; ``parse_config(serialize_config(c)) == c``."""
    out = ["[model]", f"dim = {cfg.dim}", f"kappa = {cfg.kappa!r}", f"beta = {cfg.beta!r}"]
    if cfg.mu is not None:
        out.append(f"mu = {cfg.mu!r}")
    for offset, weight in cfg.jumps or ():
        out.append(" ".join(str(c) for c in offset) + f" {weight!r}")
    out += ["", "[run]", f"horizon = {cfg.horizon!r}", f"window = {cfg.window}",
            f"replicas = {cfg.replicas}", f"seed = {cfg.seed}", f"cap = {cfg.cap}"]
    if cfg.threads is not None:
        out.append(f"threads = {cfg.threads}")
    out += ["", "[output]", f"format = {cfg.format}", f"precision = {cfg.precision}"]
    if cfg.path is not None:
        out.append(f"path = {cfg.path}")
    return "\n".join(out) + "\n"

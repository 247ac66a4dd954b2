"""Experiment configuration: a sectioned INI file mapped onto typed dataclasses.

Unknown sections or keys and unparsable values raise ConfigError carrying the
offending line number, so a typo never silently falls back to a default.
"""
from __future__ import annotations

import configparser
import dataclasses
import re
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class BaseSection:
    tau: complex = 0.3 + 1.1j
    n_grid: int = 32


@dataclass(frozen=True)
class TripleSection:
    # constant: diagonal constant data; twisted: the same data under a seeded complex gauge
    kind: str = "constant"
    alpha: float = 1.0
    phi: tuple[complex, ...] = (1.0,)
    eps: tuple[complex, ...] = (0.0,)
    twist: float = 0.0
    cutoff: int = 2


@dataclass(frozen=True)
class FamilySection:
    kind: str = "jacobian"
    delta: float = 1e-3
    # second differences carry noise ~ solver_tol / delta^2, so identities use a larger step
    identity_delta: float = 2e-2
    extent: int = 2
    twist: float = 0.25
    nonlinear: float = 0.3
    cutoff: int = 2


@dataclass(frozen=True)
class SolverSection:
    tol: float = 1e-9
    max_iter: int = 40
    cg_tol: float = 1e-10
    cg_maxiter: int = 500
    lm_shift: float = 1.0


@dataclass(frozen=True)
class ChecksSection:
    harmonic_threshold: float = 1e-6
    harmonicity_tol: float = 1e-5
    ratio_low: float = 3.0
    ratio_high: float = 5.0
    # residuals below floor * scale at both refinement steps count as exact:
    # first differences (ks) and second differences (identities) separately
    ks_noise_floor: float = 1e-9
    noise_floor: float = 1e-8
    curvature_rel_tol: float = 0.02
    fibint_rel_tol: float = 0.02
    semipositivity_samples: int = 200
    semipositivity_tol: float = 1e-8
    alphas: tuple[float, ...] = ()


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    refine: int = 1
    dump_grids: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    base: BaseSection = field(default_factory=BaseSection)
    triple: TripleSection = field(default_factory=TripleSection)
    family: FamilySection = field(default_factory=FamilySection)
    solver: SolverSection = field(default_factory=SolverSection)
    checks: ChecksSection = field(default_factory=ChecksSection)
    run: RunSection = field(default_factory=RunSection)

    def replace(self, section: str, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **{section: dataclasses.replace(getattr(self, section), **kw)})

    def to_dict(self) -> dict:
        return {s.name: {k: _jsonable(v) for k, v in dataclasses.asdict(getattr(self, s.name)).items()}
                for s in dataclasses.fields(self)}


TRIPLE_KINDS = ("constant", "twisted")
FAMILY_KINDS = ("jacobian", "polystable", "constant")


def _jsonable(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    return v


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, complex):
        return repr(v).strip("()")
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def _scalar(tp, text: str):
    text = text.strip()
    if tp is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if tp is complex:
        return complex(text.replace(" ", ""))
    return tp(text)


def _convert(tp, text: str):
    if typing.get_origin(tp) is tuple:
        inner = typing.get_args(tp)[0]
        parts = [p for p in text.split(",") if p.strip()]
        return tuple(_scalar(inner, p) for p in parts)
    return _scalar(tp, text)


def _line_of(lines, section, key=None) -> int | None:
    current = None
    for n, line in enumerate(lines, 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return n
            continue
        if key is not None and current == section and re.match(rf"\s*{re.escape(key)}\s*[=:]", line, re.I):
            return n
    return None


def _err(path, lines, section, key, msg) -> ConfigError:
    line = _line_of(lines, section, key)
    where = f"{path}:{line}" if line else str(path)
    return ConfigError(f"{where}: [{section}]{' ' + key if key else ''}: {msg}")


def _validate(cfg: ExperimentConfig) -> list[tuple[str, str, str]]:
    bad = []
    if cfg.base.n_grid < 8 or cfg.base.n_grid % 2:
        bad.append(("base", "n_grid", "must be an even integer >= 8"))
    if cfg.base.tau.imag <= 0:
        bad.append(("base", "tau", "lattice parameter needs positive imaginary part"))
    if cfg.triple.kind not in TRIPLE_KINDS:
        bad.append(("triple", "kind", f"expected one of {TRIPLE_KINDS}"))
    if len(cfg.triple.phi) != len(cfg.triple.eps):
        bad.append(("triple", "eps", "needs one entry per entry of phi"))
    if not cfg.triple.phi:
        bad.append(("triple", "phi", "must not be empty"))
    if cfg.family.kind not in FAMILY_KINDS:
        bad.append(("family", "kind", f"expected one of {FAMILY_KINDS}"))
    if not cfg.family.delta > 0:
        bad.append(("family", "delta", "must be positive"))
    if not cfg.family.identity_delta > 0:
        bad.append(("family", "identity_delta", "must be positive"))
    if cfg.run.seed < 0:
        bad.append(("run", "seed", "must be an unsigned integer"))
    if cfg.run.refine < 0:
        bad.append(("run", "refine", "must be >= 0"))
    if cfg.solver.tol <= 0 or cfg.solver.max_iter < 1:
        bad.append(("solver", "tol", "tolerance and max_iter must be positive"))
    return bad


def parse_config(text: str, path: str | Path = "<string>") -> ExperimentConfig:
    lines = text.splitlines()
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    sections = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    values = {}
    for name in parser.sections():
        if name not in sections:
            raise _err(path, lines, name, None, "unknown section")
        cls = sections[name].default_factory
        hints = typing.get_type_hints(cls)
        kw = {}
        for key, raw in parser.items(name):
            if key not in hints:
                raise _err(path, lines, name, key, "unknown key")
            try:
                kw[key] = _convert(hints[key], raw)
            except ValueError as exc:
                raise _err(path, lines, name, key, f"cannot parse {raw!r} ({exc})") from exc
        values[name] = cls(**kw)
    cfg = ExperimentConfig(**values)
    problems = _validate(cfg)
    if problems:
        raise _err(path, lines, *problems[0])
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc
    return parse_config(text, path)


def dump_config(cfg: ExperimentConfig) -> str:
    out = []
    for s in dataclasses.fields(cfg):
        out.append(f"[{s.name}]")
        for k, v in dataclasses.asdict(getattr(cfg, s.name)).items():
            out.append(f"{k} = {_fmt(v)}")
        out.append("")
    return "\n".join(out)

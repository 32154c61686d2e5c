"""INI-style run configuration.

Sections mirror the dataclasses they populate::

    [scene]       SceneConfig fields; intrinsics as fx, fy, cx, cy
    [trajectory]  TrajectoryConfig fields
    [noise]       NoiseConfig fields
    [solver]      SolverConfig fields
    [benchmark]   seeds, representations, solvers, init, features, ...

Tuples are comma separated (``workspace_min = -3, -2, 4``), booleans accept
``true/false/yes/no/1/0``.  ``seeds`` takes a count (``50`` means 0..49),
a range (``10-19``) or a list (``1, 4, 9``).  Unknown sections or keys and
unparsable values raise :class:`ConfigError` with the offending line.
"""

from __future__ import annotations

import configparser
import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError
from ..residuals import CameraIntrinsics
from ..solver import SolverConfig
from ..synthetic import REPRESENTATIONS, NoiseConfig, SceneConfig, TrajectoryConfig

SOLVERS = ("joint", "two-step")
INIT_MODES = ("odometry", "perturb")
FEATURE_MODES = ("initialize", "truth")


@dataclass
class BenchmarkConfig:
    seeds: list[int] = field(default_factory=lambda: [0])
    representations: list[str] = field(default_factory=lambda: list(REPRESENTATIONS))
    solvers: list[str] = field(default_factory=lambda: list(SOLVERS))
    init: str = "odometry"
    features: str = "initialize"
    rot_sigma: float = 0.02  # perturb init only
    trans_sigma: float = 0.05
    rpe_delta: int = 1
    workers: int = 1

    def __post_init__(self):
        for rep in self.representations:
            if rep not in REPRESENTATIONS:
                raise ValueError(f"representations: unknown representation {rep!r}")
        for s in self.solvers:
            if s not in SOLVERS:
                raise ValueError(f"solvers: unknown solver {s!r}")
        if self.init not in INIT_MODES:
            raise ValueError(f"init: unknown init mode {self.init!r}")
        if self.features not in FEATURE_MODES:
            raise ValueError(f"features: unknown feature mode {self.features!r}")
        if not self.seeds:
            raise ValueError("seeds: need at least one seed")
        if self.rpe_delta < 1 or self.workers < 1:
            raise ValueError("rpe_delta and workers must be at least 1")


@dataclass
class RunConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)

    def snapshot(self) -> dict:
        out = {}
        for name in ("scene", "trajectory", "noise", "solver", "benchmark"):
            out[name] = dataclasses.asdict(getattr(self, name))
        return out


_SECTIONS = {
    "scene": SceneConfig,
    "trajectory": TrajectoryConfig,
    "noise": NoiseConfig,
    "solver": SolverConfig,
    "benchmark": BenchmarkConfig,
}
_INTRINSIC_KEYS = ("fx", "fy", "cx", "cy")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _locate(lines: list[str], section: str, key: str | None = None) -> int | None:
    """1-based line of ``[section]`` or of ``key`` inside it."""
    current = None
    for no, raw in enumerate(lines, 1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip().lower()
            if key is None and current == section:
                return no
            continue
        if current == section and key is not None and s and s[0] not in "#;":
            name = s.split("=", 1)[0].split(":", 1)[0].strip().lower()
            if name == key:
                return no
    return None


def _parse_seeds(text: str) -> list[int]:
    text = text.strip()
    if "," in text:
        return [int(x) for x in text.split(",") if x.strip()]
    if "-" in text.lstrip("-"):
        lo, hi = text.split("-", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ValueError("empty seed range")
        return list(range(lo, hi + 1))
    n = int(text)
    if n < 1:
        raise ValueError("seed count must be positive")
    return list(range(n))


def _convert(text: str, tp):
    origin = typing.get_origin(tp)
    if tp is bool:
        low = text.strip().lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if tp is int:
        return int(text)
    if tp is float:
        return float(text)
    if tp is str:
        return text.strip()
    if origin in (tuple, list):
        args = typing.get_args(tp)
        items = [x.strip() for x in text.split(",") if x.strip()]
        if origin is tuple:
            if len(args) != len(items):
                raise ValueError(f"expected {len(args)} comma-separated values")
            return tuple(_convert(x, a) for x, a in zip(items, args))
        return [_convert(x, args[0]) for x in items]
    raise ValueError(f"unsupported field type {tp!r}")


def _rejects(cls, key: str, value) -> bool:
    try:
        cls(**{key: value})
    except (ValueError, TypeError):
        return True
    return False


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    lines = text.splitlines()
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str.lower
    try:
        cp.read_string(text, source=source)
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"{source}: duplicate section [{exc.section}]", line=exc.lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{source}: duplicate key", line=exc.lineno, field=exc.option) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{source}: key outside any section", line=exc.lineno) from None
    except configparser.ParsingError as exc:
        no = exc.errors[0][0] if exc.errors else None
        raise ConfigError(f"{source}: unparsable line", line=no) from None

    out = RunConfig()
    for section in cp.sections():
        sec = section.lower()
        if sec not in _SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}]", line=_locate(lines, sec))
        cls = _SECTIONS[sec]
        hints = typing.get_type_hints(cls)
        names = {f.name for f in dataclasses.fields(cls)}
        kwargs: dict = {}
        intr: dict = {}
        for key, raw in cp.items(section):
            where = {"line": _locate(lines, sec, key), "field": f"{sec}.{key}"}
            if sec == "scene" and key in _INTRINSIC_KEYS:
                try:
                    intr[key] = float(raw)
                except ValueError:
                    raise ConfigError(f"{source}: bad number {raw!r}", **where) from None
                continue
            if key not in names or (sec == "scene" and key == "intrinsics"):
                raise ConfigError(f"{source}: unknown key", **where)
            try:
                kwargs[key] = _parse_seeds(raw) if key == "seeds" else _convert(raw, hints[key])
            except ValueError as exc:
                raise ConfigError(f"{source}: {exc}", **where) from None
        if intr:
            base = SceneConfig().intrinsics
            vals = {k: intr.get(k, getattr(base, k)) for k in _INTRINSIC_KEYS}
            try:
                kwargs["intrinsics"] = CameraIntrinsics(**vals)
            except ValueError as exc:
                no = _locate(lines, sec, next(iter(intr)))
                raise ConfigError(f"{source}: {exc}", line=no, field="scene.intrinsics") from None
        try:
            setattr(out, sec, cls(**kwargs))
        except (ValueError, TypeError) as exc:
            # constructor validation: blame the first key that fails on its own,
            # else one named in the message
            bad = next((k for k in kwargs if _rejects(cls, k, kwargs[k])), None)
            bad = bad or next((k for k in kwargs if k in str(exc)), None)
            no = _locate(lines, sec, bad) if bad else _locate(lines, sec)
            raise ConfigError(f"{source}: {exc}", line=no, field=f"{sec}.{bad}" if bad else sec) from None
    return out


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text, source=str(p))


def format_config(cfg: RunConfig) -> str:
    """Render ``cfg`` in the format :func:`parse_config` reads."""
    out = []
    for sec, obj in (
        ("scene", cfg.scene),
        ("trajectory", cfg.trajectory),
        ("noise", cfg.noise),
        ("solver", cfg.solver),
        ("benchmark", cfg.benchmark),
    ):
        out.append(f"[{sec}]")
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if f.name == "intrinsics":
                for k in _INTRINSIC_KEYS:
                    out.append(f"{k} = {getattr(v, k)!r}")
                continue
            if f.name == "seeds":
                contiguous = v == list(range(v[0], v[0] + len(v)))
                v = f"{v[0]}-{v[-1]}" if contiguous else ", ".join(str(x) for x in v)
            elif isinstance(v, (tuple, list)):
                v = ", ".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            out.append(f"{f.name} = {v}")
        out.append("")
    return "\n".join(out)

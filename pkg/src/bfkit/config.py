"""Run configuration (strict JSON) and named random streams."""

import dataclasses
import json
import zlib
from dataclasses import dataclass, field

import numpy as np

from bfkit.errors import BfkitError


class ConfigError(BfkitError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config: " + "; ".join(self.problems))


def rng_stream(seed, name):
    """Independent generator for component ``name`` under a top-level seed."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])


@dataclass
class SolverSection:
    N: int = 4
    p: float = 2.0
    max_iters: int = 100
    tol: float = 1e-5
    epsilon: float = 1e-10
    membership_mode: str = "literal"
    init: str = "gradient"
    edge_factor: float = 5.0
    jitter: bool = False


@dataclass
class KernelSection:
    d: int = 17
    sigma: float = 4.0


@dataclass
class MaskSection:
    levels: int = 3
    bins: int = 256


@dataclass
class TVSection:
    enabled: bool = True
    variant: str = "squared_grad"
    steps: int = 5
    step_size: float = 0.1


@dataclass
class IOSection:
    formats: list = field(default_factory=lambda: ["bf32", "pgm8"])
    output_dir: str = "."


@dataclass
class RunConfig:
    solver: SolverSection = field(default_factory=SolverSection)
    kernel: KernelSection = field(default_factory=KernelSection)
    mask: MaskSection = field(default_factory=MaskSection)
    tv: TVSection = field(default_factory=TVSection)
    io: IOSection = field(default_factory=IOSection)
    seed: int = 0

    def solver_config(self):
        from bfkit.solver import SolverConfig

        s = self.solver
        return SolverConfig(
            N=s.N, p=s.p, d=self.kernel.d, sigma=self.kernel.sigma,
            max_iters=s.max_iters, tol=s.tol, tv_enabled=self.tv.enabled,
            tv_variant=self.tv.variant, tv_steps=self.tv.steps,
            tv_step_size=self.tv.step_size, epsilon=s.epsilon,
            membership_mode=s.membership_mode, init=s.init,
            edge_factor=s.edge_factor, jitter=s.jitter, seed=self.seed)

    def to_dict(self):
        return dataclasses.asdict(self)

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


_SECTIONS = {"solver": SolverSection, "kernel": KernelSection, "mask": MaskSection,
             "tv": TVSection, "io": IOSection}


def _typecheck(path, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = True
    return None if ok else f"{path}: expected {type(default).__name__}, got {value!r}"


def parse_config(doc):
    """Build a :class:`RunConfig` from a decoded JSON object.

    Every unknown key and mistyped value is collected before raising, so a
    single :class:`ConfigError` lists all problems.
    """
    problems = []
    if not isinstance(doc, dict):
        raise ConfigError(["top level: expected a JSON object"])
    kwargs = {}
    for key, value in doc.items():
        if key == "seed":
            err = _typecheck("seed", value, 0)
            if err:
                problems.append(err)
            else:
                kwargs["seed"] = value
            continue
        cls = _SECTIONS.get(key)
        if cls is None:
            problems.append(f"unknown key {key!r}")
            continue
        if not isinstance(value, dict):
            problems.append(f"{key}: expected an object")
            continue
        defaults = cls()
        fields = {f.name for f in dataclasses.fields(cls)}
        sec = {}
        for k, v in value.items():
            if k not in fields:
                problems.append(f"unknown key '{key}.{k}'")
                continue
            err = _typecheck(f"{key}.{k}", v, getattr(defaults, k))
            if err:
                problems.append(err)
            else:
                sec[k] = float(v) if isinstance(getattr(defaults, k), float) else v
        kwargs[key] = cls(**sec)
    if problems:
        raise ConfigError(problems)
    cfg = RunConfig(**kwargs)
    try:
        cfg.solver_config().kernel()
    except BfkitError as err:
        raise ConfigError([str(err)]) from None
    return cfg


def load_config(path=None):
    if path is None:
        return RunConfig()
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError([f"{path}: {err}"]) from None
    return parse_config(doc)

"""Run configuration: parsing, validation and rendering.

A config is an INI-style text with a single ``[run]`` section::

    [run]
    experiment = photon_I
    n_pairs = 1e6
    phi = linspace(0deg, 360deg, 33)
    W = 1, 2, 5

Numbers may be arithmetic in ``pi`` (``3*pi/8``); a ``deg`` suffix marks
degrees and is converted to radians at parse time.  ``linspace(a, b, n)``
expands to ``n`` evenly spaced values.  Unknown or duplicate keys are
errors.
"""

import ast
import configparser
import math
import operator
from dataclasses import dataclass, fields, replace
from typing import Optional, Tuple

from .errors import ConfigError

__all__ = ["RunConfig", "parse_config", "render", "EXPERIMENTS", "load_config"]

EXPERIMENTS = ("photon_I", "photon_II", "photon_III", "neutron", "neutron_random_chi")
PHOTON = EXPERIMENTS[:3]
SIGN_CONVENTIONS = ("neutron", "bell")


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    seed: int = 0
    out: str = "out"
    # photon experiments
    n_pairs: int = 1_000_000
    T0: float = 1000.0
    tau: float = 1.0
    W: Tuple[float, ...] = ()
    a1: float = 0.0
    a1p: float = math.pi / 4
    a2: float = math.pi / 8
    a2p: float = 3 * math.pi / 8
    phi: Tuple[float, ...] = ()
    phi2: float = 0.0
    eta1: float = 0.0
    eta2: float = math.pi / 2
    save_logs: str = "auto"
    min_coincidences: int = 0
    max_pairs: int = 0
    # neutron experiments
    gamma: float = 0.99
    R: float = 0.2
    n_per_setting: int = 10_000
    n_warmup: Optional[int] = None
    alpha: Tuple[float, ...] = (0.0,)
    chi: Tuple[float, ...] = (0.0,)
    chi1: float = 0.0
    flipper: bool = False
    chsh_settings: Tuple[float, ...] = ()
    sign_convention: str = "neutron"

    @property
    def is_photon(self):
        return self.experiment in PHOTON


_INT = {"seed", "n_pairs", "min_coincidences", "max_pairs", "n_per_setting", "n_warmup"}
_REAL = {"T0", "tau", "a1", "a1p", "a2", "a2p", "phi2", "eta1", "eta2", "gamma", "R", "chi1"}
_LIST = {"W", "phi", "alpha", "chi", "chsh_settings"}
_BOOL = {"flipper"}
_TEXT = {"experiment", "out", "save_logs", "sign_convention"}
_KEYS = [f.name for f in fields(RunConfig)]

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}


def _eval(node):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id == "pi":
        return math.pi
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left), _eval(node.right))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    raise ValueError("unsupported expression")


def _number(text):
    text = text.strip()
    deg = text.endswith("deg")
    if deg:
        text = text[:-3].strip()
    try:
        v = _eval(ast.parse(text, mode="eval").body)
    except (SyntaxError, ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"cannot read number {text!r}") from exc
    return math.radians(v) if deg else v


def _split_args(text):
    parts, depth, cur = [], 0, ""
    for ch in text:
        if ch == "," and depth == 0:
            parts.append(cur)
            cur = ""
            continue
        depth += ch == "("
        depth -= ch == ")"
        cur += ch
    parts.append(cur)
    return [p.strip() for p in parts if p.strip()]


def _number_list(text):
    out = []
    for item in _split_args(text):
        if item.startswith("linspace(") and item.endswith(")"):
            args = _split_args(item[len("linspace("):-1])
            if len(args) != 3:
                raise ValueError("linspace takes (start, stop, count)")
            a, b, n = _number(args[0]), _number(args[1]), _number(args[2])
            if n != int(n) or n < 1:
                raise ValueError("linspace count must be a positive integer")
            n = int(n)
            out += [a] if n == 1 else [a + (b - a) * k / (n - 1) for k in range(n)]
        else:
            out.append(_number(item))
    return tuple(out)


def _integer(text):
    if text.strip().lower() in ("auto", "none"):
        return None
    try:
        return int(text.strip())  # exact, also above 2**53
    except ValueError:
        pass
    v = _number(text)
    if v != int(v):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _boolean(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _line_of(text, key):
    for i, line in enumerate(text.splitlines(), 1):
        if line.split("=", 1)[0].strip().lower() == key.lower():
            return i
    return None


def parse_config(text):
    """Parse config text into a validated :class:`RunConfig`."""
    cp = configparser.ConfigParser(strict=True, interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"parse error: {exc}") from exc
    sections = cp.sections()
    if sections != ["run"]:
        raise ConfigError(f"expected exactly one [run] section, found {sections}")
    vals = {}
    for key, raw in cp.items("run"):
        where = f"line {_line_of(text, key)}, key {key!r}"
        if key not in _KEYS:
            raise ConfigError(f"{where}: unknown key")
        try:
            if key in _INT:
                vals[key] = _integer(raw)
            elif key in _REAL:
                vals[key] = _number(raw)
            elif key in _LIST:
                vals[key] = _number_list(raw)
            elif key in _BOOL:
                vals[key] = _boolean(raw)
            else:
                vals[key] = raw.strip()
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    if "experiment" not in vals:
        raise ConfigError("missing required key 'experiment'")
    return validate(RunConfig(**vals))


def validate(cfg):
    """Check parameter domains and fill derived defaults; returns a new config."""
    def bad(key, msg):
        raise ConfigError(f"key {key!r}: {msg}")

    if cfg.experiment not in EXPERIMENTS:
        bad("experiment", f"must be one of {', '.join(EXPERIMENTS)}")
    if cfg.seed is None or not 0 <= cfg.seed < 2**64:
        bad("seed", "must be an unsigned 64-bit integer")
    if not cfg.tau > 0:
        bad("tau", "must be positive")
    if not cfg.T0 > 0:
        bad("T0", "must be positive")
    if cfg.n_pairs is None or cfg.n_pairs < 1:
        bad("n_pairs", "must be >= 1")
    W = cfg.W or (cfg.tau,)
    for w in W:
        if not w >= cfg.tau:
            bad("W", f"window {w} is smaller than tau={cfg.tau}")
    if cfg.save_logs not in ("auto", "true", "false"):
        bad("save_logs", "must be auto, true or false")
    if cfg.min_coincidences is None or cfg.min_coincidences < 0:
        bad("min_coincidences", "must be >= 0")
    if cfg.max_pairs is None or cfg.max_pairs < 0:
        bad("max_pairs", "must be >= 0")
    if cfg.min_coincidences and len(W) != 1:
        bad("W", "adaptive runs (min_coincidences > 0) take a single window")
    if cfg.experiment == "photon_II":
        d = math.remainder(cfg.eta2 - cfg.eta1 - math.pi / 2, 2 * math.pi)
        if abs(d) > 1e-12:
            bad("eta2", "experiment II needs eta2 = eta1 + 90deg")
    if not 0.0 < cfg.gamma < 1.0:
        bad("gamma", "must lie in (0, 1)")
    if not 0.0 < cfg.R < 1.0:
        bad("R", "must lie in (0, 1)")
    if cfg.n_per_setting is None or cfg.n_per_setting < 1:
        bad("n_per_setting", "must be >= 1")
    if cfg.n_warmup is not None and cfg.n_warmup < 0:
        bad("n_warmup", "must be >= 0")
    if not cfg.alpha:
        bad("alpha", "needs at least one value")
    if not cfg.chi:
        bad("chi", "needs at least one value")
    if cfg.chsh_settings and len(cfg.chsh_settings) != 4:
        bad("chsh_settings", "needs four angles alpha, chi, alpha', chi'")
    if cfg.sign_convention not in SIGN_CONVENTIONS:
        bad("sign_convention", f"must be one of {', '.join(SIGN_CONVENTIONS)}")
    return replace(cfg, W=tuple(W))


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def render(cfg):
    """Config text that parses back to ``cfg``."""
    lines = ["[run]"]
    for key in _KEYS:
        v = getattr(cfg, key)
        if v is None:
            v = "auto"
        elif key in _LIST and not v:
            continue
        lines.append(f"{key} = {_fmt(v)}")
    return "\n".join(lines) + "\n"


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())

"""Experiment configuration: a flat-section key=value document.

The grammar is INI (configparser): sections [experiment], [drift],
[modulus], [grid], [time], [mc], [pde], [transport], [output]; keys are
typed per the tables in the README.  Ladder-valued keys accept either a
comma list or the dyadic range syntax "2^a..2^b" (exponent stepping by one,
either direction).  Every field is validated before any computation and
errors carry the dotted field path.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .. import moduli, sde_flow
from ..errors import ParseError, ValidationError
from ..grids import SpatialGrid

KINDS = (
    "pde-solve", "lambda-sweep", "flow-sim", "flow-modulus",
    "mollify-convergence", "transport", "weak-residual",
    "nonuniqueness-demo", "modulus-verify",
)

DRIFT_NAMES = ("zero", "constant", "ou", "tanh", "sin", "holder",
               "holder-sin", "log-modulus", "divfree")
MODULUS_FAMILIES = ("power-log", "inverse-log", "linear", "table", "none")
U0_NAMES = ("sin", "cos", "bump", "step")
SOURCE_NAMES = ("sin", "cos", "one", "zero")


@dataclass(frozen=True)
class DriftConfig:
    name: str = "zero"
    c: float = 0.5
    k: float = 1.0
    scale: float = 1.0
    alpha: float = 0.5
    C: float = 1.0
    r_cut: float = 0.25
    n: int = 0           # mollification level, 0 = as given


@dataclass(frozen=True)
class ModulusConfig:
    family: str = "none"
    C: float = 1.0
    theta: float = 0.5
    alpha: float = 0.0
    r0: float = 0.5
    table: tuple = ()


@dataclass(frozen=True)
class GridConfig:
    L: float = 8.0
    n: int = 257
    d: int = 1


@dataclass(frozen=True)
class TimeConfig:
    s: float = 0.0
    T: float = 1.0
    dt: float = 2.0 ** -8


@dataclass(frozen=True)
class MCConfig:
    M: int = 1000
    p: float = 2.0
    separations: tuple = tuple(2.0 ** -k for k in range(3, 10))
    n_list: tuple = (2, 4, 8, 16, 32)
    lambdas: tuple = tuple(2.0 ** k for k in range(11))


@dataclass(frozen=True)
class PdeConfig:
    f: str = "sin"
    f_scale: float = 1.0
    g: str = "zero"
    g_scale: float = 0.5
    target: str = "flow"    # mollify-convergence: "flow" or "pde"


@dataclass(frozen=True)
class TransportConfig:
    u0: str = "sin"
    phi_center: float = 0.0
    phi_width: float = 3.0


@dataclass(frozen=True)
class OutputConfig:
    full_paths: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int = 0
    output_dir: str = "runs"
    drift: DriftConfig = field(default_factory=DriftConfig)
    modulus: ModulusConfig = field(default_factory=ModulusConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    mc: MCConfig = field(default_factory=MCConfig)
    pde: PdeConfig = field(default_factory=PdeConfig)
    transport: TransportConfig = field(default_factory=TransportConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def as_dict(self) -> dict:
        return asdict(self)


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(cfg.as_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# Parsing


def _number(tok: str, where: str) -> float:
    tok = tok.strip()
    try:
        if "^" in tok:
            base, exp = tok.split("^")
            return float(base) ** float(exp)
        return float(tok)
    except ValueError as e:
        raise ValidationError(where, f"not a number: {tok!r}") from e


def _ladder(text: str, where: str) -> tuple:
    text = text.strip()
    if ".." in text:
        lo_s, hi_s = text.split("..")
        lo, hi = _number(lo_s, where), _number(hi_s, where)
        if lo <= 0 or hi <= 0:
            raise ValidationError(where, "dyadic range endpoints must be positive")
        vals = [lo]
        ratio = 2.0 if hi > lo else 0.5
        while (vals[-1] < hi * 0.999) if hi > lo else (vals[-1] > hi * 1.001):
            vals.append(vals[-1] * ratio)
            if len(vals) > 64:
                raise ValidationError(where, "dyadic range too long")
        return tuple(vals)
    return tuple(_number(t, where) for t in text.split(",") if t.strip())


def _int(text: str, where: str) -> int:
    try:
        return int(text.strip())
    except ValueError as e:
        raise ValidationError(where, f"not an integer: {text!r}") from e


def _bool(text: str, where: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValidationError(where, f"not a boolean: {text!r}")


_SECTION_KEYS = {
    "experiment": {"kind", "seed", "output_dir"},
    "drift": {"name", "c", "k", "scale", "alpha", "C", "r_cut", "n"},
    "modulus": {"family", "C", "theta", "alpha", "r0", "table"},
    "grid": {"L", "n", "d"},
    "time": {"s", "T", "dt"},
    "mc": {"M", "p", "separations", "n_list", "lambdas"},
    "pde": {"f", "f_scale", "g", "g_scale", "target"},
    "transport": {"u0", "phi_center", "phi_width"},
    "output": {"full_paths"},
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse and fully validate a config document.

    Raises ParseError for malformed documents and ValidationError (carrying
    the dotted field path) for out-of-range or unknown fields; a valid
    document yields a frozen ExperimentConfig with defaults filled in.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep key case
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ParseError(f"config parse failure: {e}") from e
    for sec in cp.sections():
        if sec not in _SECTION_KEYS:
            raise ValidationError(sec, "unknown section")
        for key in cp[sec]:
            if key not in _SECTION_KEYS[sec]:
                raise ValidationError(f"{sec}.{key}", "unknown key")

    def get(sec, key, default=None):
        return cp.get(sec, key, fallback=default) if cp.has_section(sec) else default

    kind = get("experiment", "kind")
    if kind is None:
        raise ValidationError("experiment.kind", "required")
    if kind not in KINDS:
        raise ValidationError("experiment.kind", f"unknown kind {kind!r}; one of {KINDS}")
    seed = _int(get("experiment", "seed", "0"), "experiment.seed")
    if not (0 <= seed < 2 ** 64):
        raise ValidationError("experiment.seed", "must fit in 64 bits")
    output_dir = get("experiment", "output_dir", "runs")

    dname = get("drift", "name", "zero")
    if dname not in DRIFT_NAMES:
        raise ValidationError("drift.name", f"unknown drift {dname!r}; one of {DRIFT_NAMES}")
    drift = DriftConfig(
        name=dname,
        c=_number(get("drift", "c", "0.5"), "drift.c"),
        k=_number(get("drift", "k", "1.0"), "drift.k"),
        scale=_number(get("drift", "scale", "1.0"), "drift.scale"),
        alpha=_number(get("drift", "alpha", "0.5"), "drift.alpha"),
        C=_number(get("drift", "C", "1.0"), "drift.C"),
        r_cut=_number(get("drift", "r_cut", "0.25"), "drift.r_cut"),
        n=_int(get("drift", "n", "0"), "drift.n"),
    )
    if dname in ("holder", "holder-sin") and not (0.0 < drift.alpha < 1.0):
        raise ValidationError("drift.alpha", "must lie in (0, 1)")
    if drift.n < 0:
        raise ValidationError("drift.n", "must be >= 0")

    fam = get("modulus", "family", "none")
    if fam not in MODULUS_FAMILIES:
        raise ValidationError("modulus.family",
                              f"unknown family {fam!r}; one of {MODULUS_FAMILIES}")
    table: tuple = ()
    traw = get("modulus", "table", "")
    if traw:
        try:
            table = tuple(tuple(_number(v, "modulus.table") for v in pair.split(":"))
                          for pair in traw.split(",") if pair.strip())
        except ValueError as e:
            raise ValidationError("modulus.table", "expected r1:phi1,r2:phi2,...") from e
    r0 = _number(get("modulus", "r0", "0.5"), "modulus.r0")
    if fam != "none" and not (0.0 < r0 < 1.0):
        raise ValidationError("modulus.r0", "must lie in (0, 1)")
    modulus = ModulusConfig(
        family=fam,
        C=_number(get("modulus", "C", "1.0"), "modulus.C"),
        theta=_number(get("modulus", "theta", "0.5"), "modulus.theta"),
        alpha=_number(get("modulus", "alpha", "0.0"), "modulus.alpha"),
        r0=r0, table=table)

    grid = GridConfig(
        L=_number(get("grid", "L", "8.0"), "grid.L"),
        n=_int(get("grid", "n", "257"), "grid.n"),
        d=_int(get("grid", "d", "1"), "grid.d"))
    if grid.L <= 0:
        raise ValidationError("grid.L", "must be positive")
    if grid.n < 8:
        raise ValidationError("grid.n", "must be >= 8")
    if grid.d not in (1, 2):
        raise ValidationError("grid.d", "supported dimensions are 1 and 2")

    tc = TimeConfig(
        s=_number(get("time", "s", "0.0"), "time.s"),
        T=_number(get("time", "T", "1.0"), "time.T"),
        dt=_number(get("time", "dt", str(2.0 ** -8)), "time.dt"))
    if tc.T <= tc.s:
        raise ValidationError("time.T", "must exceed time.s")
    if tc.dt <= 0:
        raise ValidationError("time.dt", "must be positive")
    ratio = (tc.T - tc.s) / tc.dt
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
        raise ValidationError("time.dt", f"must divide T - s = {tc.T - tc.s}")

    mc = MCConfig(
        M=_int(get("mc", "M", "1000"), "mc.M"),
        p=_number(get("mc", "p", "2.0"), "mc.p"),
        separations=_ladder(get("mc", "separations", "2^-3..2^-9"), "mc.separations"),
        n_list=tuple(int(v) for v in _ladder(get("mc", "n_list", "2,4,8,16,32"), "mc.n_list")),
        lambdas=_ladder(get("mc", "lambdas", "2^0..2^10"), "mc.lambdas"))
    if mc.M < 1:
        raise ValidationError("mc.M", "must be >= 1")
    if mc.p < 1.0:
        raise ValidationError("mc.p", "must be >= 1")

    pde = PdeConfig(
        f=get("pde", "f", "sin"), f_scale=_number(get("pde", "f_scale", "1.0"), "pde.f_scale"),
        g=get("pde", "g", "zero"), g_scale=_number(get("pde", "g_scale", "0.5"), "pde.g_scale"),
        target=get("pde", "target", "flow"))
    if pde.f not in SOURCE_NAMES:
        raise ValidationError("pde.f", f"unknown source {pde.f!r}; one of {SOURCE_NAMES}")
    if pde.g not in DRIFT_NAMES:
        raise ValidationError("pde.g", f"unknown drift {pde.g!r}")
    if pde.target not in ("flow", "pde"):
        raise ValidationError("pde.target", "must be 'flow' or 'pde'")

    transport = TransportConfig(
        u0=get("transport", "u0", "sin"),
        phi_center=_number(get("transport", "phi_center", "0.0"), "transport.phi_center"),
        phi_width=_number(get("transport", "phi_width", "3.0"), "transport.phi_width"))
    if transport.u0 not in U0_NAMES:
        raise ValidationError("transport.u0", f"unknown datum {transport.u0!r}; one of {U0_NAMES}")

    output = OutputConfig(full_paths=_bool(get("output", "full_paths", "false"),
                                           "output.full_paths"))
    return ExperimentConfig(kind=kind, seed=seed, output_dir=output_dir,
                            drift=drift, modulus=modulus, grid=grid, time=tc,
                            mc=mc, pde=pde, transport=transport, output=output)


def apply_overrides(text: str, overrides) -> str:
    """Apply --set section.key=value pairs on top of a config document."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ParseError(f"config parse failure: {e}") from e
    for ov in overrides:
        if "=" not in ov:
            raise ParseError(f"override {ov!r} is not key=value")
        key, val = ov.split("=", 1)
        if "." not in key:
            raise ParseError(f"override key {key!r} is not section.key")
        sec, k = key.split(".", 1)
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, k, val)
    import io
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Builders


def build_drift(cfg: ExperimentConfig) -> sde_flow.DriftSpec:
    c = cfg.drift
    d = cfg.grid.d
    if c.name == "zero":
        spec = sde_flow.zero_drift(d)
    elif c.name == "constant":
        spec = sde_flow.constant_drift(c.c, d)
    elif c.name == "ou":
        spec = sde_flow.ou_drift(c.k, d)
    elif c.name == "tanh":
        spec = sde_flow.tanh_drift(c.scale, d)
    elif c.name == "sin":
        spec = sde_flow.sin_drift(c.scale, d)
    elif c.name == "holder":
        spec = sde_flow.holder_drift(c.alpha, c.scale, d=d)
    elif c.name == "holder-sin":
        spec = sde_flow.holder_sin_drift(c.alpha, c.scale, d=d)
    elif c.name == "log-modulus":
        spec = sde_flow.log_modulus_drift(c.C, c.alpha, c.r_cut, d=d)
    elif c.name == "divfree":
        if d != 2:
            raise ValidationError("drift.name", "divfree requires grid.d = 2")
        spec = sde_flow.divergence_free_2d(c.scale)
    else:  # pragma: no cover - guarded by parse
        raise ValidationError("drift.name", f"unknown drift {c.name!r}")
    if c.n > 0:
        spec = sde_flow.mollify_drift(spec, c.n)
    return spec


def build_modulus(cfg: ExperimentConfig) -> Optional[moduli.Modulus]:
    m = cfg.modulus
    if m.family == "none":
        return None
    if m.family == "power-log":
        return moduli.power_log_modulus(m.C, m.theta, m.alpha, m.r0)
    if m.family == "inverse-log":
        return moduli.inverse_log_modulus(m.C, m.alpha, m.r0)
    if m.family == "linear":
        return moduli.linear_modulus(m.C, m.r0)
    if m.family == "table":
        if len(m.table) < 2:
            raise ValidationError("modulus.table", "table family needs >= 2 pairs")
        rs = [p[0] for p in m.table]
        ps = [p[1] for p in m.table]
        return moduli.table_modulus(rs, ps, m.r0)
    raise ValidationError("modulus.family", f"unknown family {m.family!r}")


def build_grid(cfg: ExperimentConfig) -> SpatialGrid:
    return SpatialGrid(L=cfg.grid.L, n=cfg.grid.n, d=cfg.grid.d)


def build_times(cfg: ExperimentConfig) -> np.ndarray:
    K = int(round((cfg.time.T - cfg.time.s) / cfg.time.dt))
    return cfg.time.s + cfg.time.dt * np.arange(K + 1)


def build_u0(cfg: ExperimentConfig):
    name = cfg.transport.u0
    if name == "sin":
        return lambda X: np.sin(np.atleast_2d(X)[:, 0])
    if name == "cos":
        return lambda X: np.cos(np.atleast_2d(X)[:, 0])
    if name == "bump":
        from ..transport import bump_test_function
        return bump_test_function(0.0, 2.0, d=cfg.grid.d).phi
    if name == "step":
        return lambda X: np.where(np.atleast_2d(X)[:, 0] > 0.0, 1.0, 0.0)
    raise ValidationError("transport.u0", f"unknown datum {name!r}")


def build_source(name: str, scale: float, grid: SpatialGrid, times: np.ndarray):
    """Scalar source field for pde-solve (sampled on the grid)."""
    mesh = grid.meshgrid()
    if name == "sin":
        base = np.sin(mesh[0])
    elif name == "cos":
        base = np.cos(mesh[0])
    elif name == "one":
        base = np.ones(grid.shape)
    elif name == "zero":
        base = np.zeros(grid.shape)
    else:
        raise ValidationError("pde.f", f"unknown source {name!r}")
    vals = np.broadcast_to(scale * base, (times.size,) + grid.shape).copy()
    from ..grids import GridFunction
    return GridFunction(grid, times, vals)

"""Scenario files: schema, validation, built-in library and problem assembly.

A scenario is a YAML mapping::

    name: allen-cahn-1d
    alpha: 0.5
    domain: {a: 0, b: 1, nx: 101}
    time: {T: 100, nt: 800, mesh: graded_then_uniform, gamma: null, t_switch: 1.0}
    operator: {D: 1, d: 0, bc: dirichlet, a_inf: [0, 0]}
    coefficients: {p: 1, q: -1, r_exp: inf, s_exp: 2}
    nonlinearity: {name: cubic}
    source: {r_inf: 0, perturbation: {kind: none}}
    initial: {mode: steady_plus, profile: "sin(pi*x)", radius: 0.1, normalize: H1}
    verify: {theorems: [decay], regime: hi}

Expressions are arithmetic strings in ``x`` (``t`` for time envelopes).
Missing keys take the defaults below; unknown keys are rejected.
"""
from __future__ import annotations

import copy
import math

import numpy as np
import yaml

from . import expr
from .fracops import CaputoWeights, TimeGrid
from .model import (
    BUILTIN_NONLINEARITIES,
    Growth,
    Problem,
    Source,
    custom,
    normalize,
)
from .space import BoundaryCondition, EllipticOp, Grid1D, assemble, norm_Hs_sq

MESHES = ("uniform", "graded", "graded_then_uniform")
PERTURBATIONS = ("none", "power", "exponential")
INITIAL_MODES = ("steady_plus", "expr", "controlled")
REGIMES = ("lo", "hi", "between")
THEOREMS = ("decay", "ut", "probe")
NORMALIZE = ("none", "L2", "H1")


class ConfigError(ValueError):
    """Schema violation; ``path`` is the dotted key that failed."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


_INF = math.inf

DEFAULTS = {
    "name": "scenario",
    "alpha": None,  # required
    "domain": {"a": 0.0, "b": 1.0, "nx": 101},
    "time": {"T": 1.0, "nt": 400, "mesh": "graded", "gamma": None, "t_switch": None, "n_graded": None},
    "operator": {"D": 1.0, "d": 0.0, "bc": "dirichlet", "a_inf": [0.0, 0.0]},
    "coefficients": {"p": 1.0, "q": 0.0, "r_exp": _INF, "s_exp": 2.0},
    "nonlinearity": {"name": "none", "growth": None, "f": None, "df": None, "d2f": None, "degree": None},
    "source": {
        "r_inf": 0.0,
        "perturbation": {"kind": "none", "amplitude": 0.0, "exponent": None, "rate": None, "profile": "sin(pi*x)"},
        "omega_r": None,
    },
    "initial": {"mode": "steady_plus", "profile": "sin(pi*x)", "radius": 0.0, "normalize": "none",
                "phi": "1 + exp(-t)", "random": False},
    "verify": {"theorems": ["decay"], "regime": "hi", "history": "direct", "probe_radii": [0.1, 0.5, 1.0, 2.0],
               "t0": None, "beta": None, "phi1_variant": "corrected", "window": None},
}

BUILTINS = {
    "linear-heat": {
        "name": "linear-heat",
        "alpha": 1.0,
        "domain": {"nx": 201},
        "time": {"T": 1.0, "nt": 2000, "mesh": "uniform"},
        "coefficients": {"p": 0.0, "q": -1.0},
        "initial": {"mode": "steady_plus", "profile": "sin(pi*x)", "radius": 0.1},
        "verify": {"theorems": ["decay", "ut"], "regime": "hi"},
    },
    "linear-subdiffusion": {
        "name": "linear-subdiffusion",
        "alpha": 0.6,
        "domain": {"nx": 101},
        "time": {"T": 1000.0, "nt": 4000, "mesh": "graded_then_uniform", "t_switch": 1.0},
        "coefficients": {"p": 0.0, "q": -1.0},
        "initial": {"mode": "steady_plus", "profile": "sin(pi*x)", "radius": 0.1},
        "verify": {"theorems": ["decay"], "regime": "hi"},
    },
    "forced-subdiffusion": {
        "name": "forced-subdiffusion",
        "alpha": 0.6,
        "domain": {"nx": 101},
        "time": {"T": 1000.0, "nt": 4000, "mesh": "graded_then_uniform", "t_switch": 1.0},
        "coefficients": {"p": 0.0, "q": -1.0},
        "source": {"perturbation": {"kind": "power", "amplitude": 1.0, "exponent": None}},
        "initial": {"mode": "steady_plus", "profile": "sin(pi*x)", "radius": 0.0},
        "verify": {"theorems": ["decay"], "regime": "hi"},
    },
    "allen-cahn-1d": {
        "name": "allen-cahn-1d",
        "alpha": 0.5,
        "domain": {"nx": 101},
        "time": {"T": 100.0, "nt": 1000, "mesh": "graded_then_uniform", "t_switch": 1.0},
        "coefficients": {"p": 1.0, "q": -1.0},
        "nonlinearity": {"name": "cubic"},
        "initial": {"mode": "steady_plus", "profile": "sin(pi*x)", "radius": 0.1, "normalize": "H1"},
        "verify": {"theorems": ["decay"], "regime": "hi", "probe_radii": [0.1, 0.5, 1.0, 2.0]},
    },
    "cubic-monotone": {
        "name": "cubic-monotone",
        "alpha": 0.5,
        "domain": {"nx": 101},
        "time": {"T": 100.0, "nt": 1000, "mesh": "graded_then_uniform", "t_switch": 1.0},
        "coefficients": {"p": 1.0, "q": 0.0},
        "nonlinearity": {"name": "custom", "f": "xi**3 + xi", "df": "3*xi**2 + 1", "d2f": "6*xi",
                         "growth": {"c2": 0.0, "C2": 6.0, "kappa2": 1.0}, "degree": 3},
        "source": {"r_inf": "4*sin(pi*x)"},
        "initial": {"mode": "steady_plus", "profile": "sin(pi*x)", "radius": 2.0, "normalize": "H1"},
        "verify": {"theorems": ["decay"], "regime": "between"},
    },
    "source-controlled": {
        "name": "source-controlled",
        "alpha": 1.0,
        "domain": {"nx": 101},
        "time": {"T": 8.0, "nt": 1600, "mesh": "uniform"},
        "coefficients": {"p": 1.0, "q": -1.0},
        "nonlinearity": {"name": "cubic"},
        "initial": {"mode": "controlled", "profile": "sin(pi*x)", "phi": "1 + exp(-t)"},
        "verify": {"theorems": ["decay", "ut"], "regime": "hi"},
    },
}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(where, "unknown key")
        if isinstance(base[key], dict) and base[key] and key not in ("growth",):
            if not isinstance(val, dict):
                raise ConfigError(where, "expected a mapping")
            out[key] = _merge(base[key], val, where)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _num(cfg, path, positive=False, nonneg=False, integer=False, allow_none=False, allow_inf=False):
    cur = cfg
    for part in path.split("."):
        cur = cur[part]
    if cur is None:
        if allow_none:
            return None
        raise ConfigError(path, "required value missing")
    if isinstance(cur, str) and allow_inf and cur.strip().lower() in ("inf", "infinity", ".inf"):
        return math.inf
    if isinstance(cur, bool) or not isinstance(cur, (int, float)):
        raise ConfigError(path, f"expected a number, got {cur!r}")
    v = float(cur)
    if math.isnan(v) or (math.isinf(v) and not allow_inf):
        raise ConfigError(path, f"expected a finite number, got {cur!r}")
    if integer and v != int(v):
        raise ConfigError(path, f"expected an integer, got {cur!r}")
    if positive and not v > 0:
        raise ConfigError(path, f"must be positive, got {cur!r}")
    if nonneg and v < 0:
        raise ConfigError(path, f"must be non-negative, got {cur!r}")
    return int(v) if integer else v


def _choice(cfg, path, options):
    cur = cfg
    for part in path.split("."):
        cur = cur[part]
    if cur not in options:
        raise ConfigError(path, f"must be one of {list(options)}, got {cur!r}")
    return cur


def _expr(cfg, path, var="x"):
    cur = cfg
    for part in path.split("."):
        cur = cur[part]
    try:
        expr.compile_expr(cur, var)
    except expr.ExpressionError as exc:
        raise ConfigError(path, str(exc)) from None
    return cur


def validate(raw: dict | None) -> dict:
    """Merge ``raw`` over the defaults and check every field.

    Raises :class:`ConfigError` naming the offending dotted path.
    """
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "scenario must be a mapping")
    if "alpha" not in raw or raw["alpha"] is None:
        raise ConfigError("alpha", "required value missing")
    cfg = _merge(DEFAULTS, raw)
    if not isinstance(cfg["name"], str):
        raise ConfigError("name", "expected a string")
    a = _num(cfg, "alpha")
    if not 0.0 < a <= 1.0:
        raise ConfigError("alpha", f"must lie in (0, 1], got {a!r}")
    lo = _num(cfg, "domain.a")
    hi = _num(cfg, "domain.b")
    if not hi > lo:
        raise ConfigError("domain.b", "must exceed domain.a")
    nx = _num(cfg, "domain.nx", integer=True)
    if nx < 5:
        raise ConfigError("domain.nx", "needs at least 5 nodes")
    _num(cfg, "time.T", positive=True)
    nt = _num(cfg, "time.nt", integer=True)
    if nt < 1:
        raise ConfigError("time.nt", "needs at least one step")
    mesh = _choice(cfg, "time.mesh", MESHES)
    g = _num(cfg, "time.gamma", allow_none=True)
    if g is not None and g < 1.0:
        raise ConfigError("time.gamma", "grading exponent must be >= 1")
    ts = _num(cfg, "time.t_switch", positive=True, allow_none=True)
    if mesh == "graded_then_uniform" and ts is None:
        raise ConfigError("time.t_switch", "required for mesh graded_then_uniform")
    _num(cfg, "time.n_graded", integer=True, allow_none=True)
    for key in ("D", "d"):
        _expr(cfg, f"operator.{key}")
    _choice(cfg, "operator.bc", ("dirichlet", "neumann"))
    ainf = cfg["operator"]["a_inf"]
    if not (isinstance(ainf, (list, tuple)) and len(ainf) == 2):
        raise ConfigError("operator.a_inf", "expected [left, right]")
    for i, v in enumerate(ainf):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"operator.a_inf[{i}]", f"expected a number, got {v!r}")
    for key in ("p", "q"):
        _expr(cfg, f"coefficients.{key}")
    r = _num(cfg, "coefficients.r_exp", allow_inf=True)
    if r < 1.0:
        raise ConfigError("coefficients.r_exp", "must be >= 1")
    cfg["coefficients"]["r_exp"] = r
    s = _num(cfg, "coefficients.s_exp", allow_inf=True)
    if s < 2.0:
        raise ConfigError("coefficients.s_exp", "must be >= 2")
    cfg["coefficients"]["s_exp"] = s
    nl = cfg["nonlinearity"]
    names = tuple(BUILTIN_NONLINEARITIES) + ("custom",)
    _choice(cfg, "nonlinearity.name", names)
    if nl["name"] == "custom":
        for key in ("f", "df", "d2f"):
            if nl[key] is None:
                raise ConfigError(f"nonlinearity.{key}", "required for a custom nonlinearity")
            _expr(cfg, f"nonlinearity.{key}", "xi")
    if nl["growth"] is not None:
        if not isinstance(nl["growth"], dict):
            raise ConfigError("nonlinearity.growth", "expected a mapping")
        for key in nl["growth"]:
            if key not in ("c2", "C2", "kappa2"):
                raise ConfigError(f"nonlinearity.growth.{key}", "unknown key")
        for key in ("c2", "C2", "kappa2"):
            nl["growth"].setdefault(key, 0.0)
            _num(cfg, f"nonlinearity.growth.{key}", nonneg=True)
    _num(cfg, "nonlinearity.degree", integer=True, allow_none=True)
    _expr(cfg, "source.r_inf")
    kind = _choice(cfg, "source.perturbation.kind", PERTURBATIONS)
    if kind != "none":
        _num(cfg, "source.perturbation.amplitude", nonneg=True)
        _expr(cfg, "source.perturbation.profile")
    if kind == "power":
        _num(cfg, "source.perturbation.exponent", positive=True, allow_none=True)
    if kind == "exponential":
        _num(cfg, "source.perturbation.rate", positive=True)
    _num(cfg, "source.omega_r", positive=True, allow_none=True)
    mode = _choice(cfg, "initial.mode", INITIAL_MODES)
    _expr(cfg, "initial.profile")
    _num(cfg, "initial.radius", nonneg=True)
    _choice(cfg, "initial.normalize", NORMALIZE)
    if mode == "controlled":
        _expr(cfg, "initial.phi", "t")
        if kind != "none":
            raise ConfigError("source.perturbation.kind", "must be none for a source-controlled scenario")
    if not isinstance(cfg["initial"]["random"], bool):
        raise ConfigError("initial.random", "expected true or false")
    th = cfg["verify"]["theorems"]
    if not isinstance(th, list):
        raise ConfigError("verify.theorems", "expected a list")
    for i, name in enumerate(th):
        if name not in THEOREMS:
            raise ConfigError(f"verify.theorems[{i}]", f"must be one of {list(THEOREMS)}, got {name!r}")
    _choice(cfg, "verify.regime", REGIMES)
    _choice(cfg, "verify.history", ("direct", "soe"))
    _choice(cfg, "verify.phi1_variant", ("corrected", "as_printed"))
    radii = cfg["verify"]["probe_radii"]
    if not isinstance(radii, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0 for v in radii):
        raise ConfigError("verify.probe_radii", "expected a list of non-negative numbers")
    _num(cfg, "verify.t0", nonneg=True, allow_none=True)
    _num(cfg, "verify.beta", positive=True, allow_none=True)
    win = cfg["verify"]["window"]
    if win is not None and not (isinstance(win, list) and len(win) == 2 and win[0] < win[1]):
        raise ConfigError("verify.window", "expected [t_start, t_end] with t_start < t_end")
    return cfg


def builtin(name: str) -> dict:
    if name not in BUILTINS:
        raise KeyError(f"unknown built-in scenario {name!r}; choose from {sorted(BUILTINS)}")
    return copy.deepcopy(BUILTINS[name])


def load(source: str) -> dict:
    """Raw mapping from a built-in name or a YAML file path."""
    if source in BUILTINS:
        return builtin(source)
    with open(source) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"YAML parse error: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("<root>", "scenario must be a mapping")
    return data


def _parse_scalar(text: str):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``a.b.c=value`` overrides (values parsed as YAML scalars)."""
    out = copy.deepcopy(raw)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(item, "override must look like key.path=value")
        key, _, text = item.partition("=")
        parts = key.strip().split(".")
        cur = out
        for i, part in enumerate(parts[:-1]):
            nxt = cur.get(part)
            if nxt is None:
                nxt = cur[part] = {}
            if not isinstance(nxt, dict):
                raise ConfigError(".".join(parts[: i + 1]), "cannot descend into a non-mapping")
            cur = nxt
        cur[parts[-1]] = _parse_scalar(text)
    return out


def dump(cfg: dict) -> str:
    """YAML echo of a validated config (reloads to the same config)."""
    def clean(v):
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, list):
            return [clean(x) for x in v]
        if isinstance(v, float) and math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return yaml.safe_dump(clean(cfg), sort_keys=True, default_flow_style=False)


# ---------------------------------------------------------------------------
# assembly


def time_grid(cfg: dict) -> TimeGrid:
    tc = cfg["time"]
    alpha = float(cfg["alpha"])
    T, N = float(tc["T"]), int(tc["nt"])
    gamma = tc["gamma"] if tc["gamma"] is not None else TimeGrid.default_gamma(alpha)
    if tc["mesh"] == "uniform" or (alpha == 1.0 and tc["gamma"] is None and tc["mesh"] == "graded"):
        return TimeGrid.uniform(T, N)
    if tc["mesh"] == "graded":
        return TimeGrid.graded(T, N, gamma)
    return TimeGrid.graded_then_uniform(T, N, gamma, float(tc["t_switch"]), tc["n_graded"])


def _nonlinearity(cfg):
    nc = cfg["nonlinearity"]
    if nc["name"] == "custom":
        growth = Growth(**{k: float(v) for k, v in (nc["growth"] or {}).items()})
        return custom(str(nc["f"]), str(nc["df"]), str(nc["d2f"]), growth, nc["degree"])
    nl = BUILTIN_NONLINEARITIES[nc["name"]]()
    if nc["growth"] is not None:
        nl = type(nl)(nl.f, nl.df, nl.d2f, Growth(**{k: float(v) for k, v in nc["growth"].items()}), nl.name, nl.degree)
    return nl


def _unit(profile, grid, norm):
    if norm == "none":
        return profile
    s = 0 if norm == "L2" else 1
    n = math.sqrt(float(norm_Hs_sq(profile, grid, s)))
    if n == 0.0:
        raise ConfigError("initial.profile", "profile has zero norm")
    return profile / n


class Scenario:
    """A validated config turned into a :class:`Problem` (``u0`` filled in later)."""

    def __init__(self, cfg: dict, seed: int = 0):
        self.cfg = cfg
        self.seed = int(seed)
        dc, oc, cc = cfg["domain"], cfg["operator"], cfg["coefficients"]
        self.grid = Grid1D(float(dc["a"]), float(dc["b"]), int(dc["nx"]))
        x = self.grid.x
        if oc["bc"] == "dirichlet":
            bc = BoundaryCondition("dirichlet", float(oc["a_inf"][0]), float(oc["a_inf"][1]))
        else:
            bc = BoundaryCondition("neumann", float(oc["a_inf"][0]), float(oc["a_inf"][1]))
        self.op = EllipticOp(self.grid.field(expr.compile_expr(oc["D"])), self.grid.field(expr.compile_expr(oc["d"])), bc)
        self.alpha = float(cfg["alpha"])
        self.tgrid = time_grid(cfg)
        p = self.grid.field(expr.compile_expr(cc["p"]))
        q = self.grid.field(expr.compile_expr(cc["q"]))
        nl = _nonlinearity(cfg)
        r_inf = self.grid.field(expr.compile_expr(cfg["source"]["r_inf"]))
        # move f(0) and f'(0) into the source and q
        self.nl_raw = nl
        nl_t, q_t, _, r_inf_t = normalize(nl, p, q, r_inf, r_inf)
        self.p, self.q, self.nl, self.r_inf = p, q_t, nl_t, r_inf_t
        self.source = self._source()
        self.r_exp = float(cc["r_exp"])
        self.s_exp = float(cc["s_exp"])

    def _source(self) -> Source:
        pc = self.cfg["source"]["perturbation"]
        kind = pc["kind"]
        if kind == "none":
            return Source(self.r_inf)
        prof = self.grid.field(expr.compile_expr(pc["profile"]))
        prof = _unit(prof, self.grid, "L2")
        amp = float(pc["amplitude"])
        if kind == "power":
            k = float(pc["exponent"]) if pc["exponent"] is not None else self.alpha
            env = lambda t, k=k, amp=amp: amp * (1.0 + np.asarray(t, dtype=float)) ** (-0.5 * k)
        else:
            rate = float(pc["rate"])
            env = lambda t, rate=rate, amp=amp: amp * np.exp(-0.5 * rate * np.asarray(t, dtype=float))
        return Source(self.r_inf, prof * 1.0, env, meta={"kind": kind})

    @property
    def omega_r(self):
        om = self.cfg["source"]["omega_r"]
        if om is not None:
            return float(om)
        pc = self.cfg["source"]["perturbation"]
        if pc["kind"] == "exponential":
            return float(pc["rate"])
        return None

    def problem(self, u0=None, source: Source | None = None) -> Problem:
        if u0 is None:
            u0 = np.zeros(self.grid.nx)
            bc = self.op.bc
            if bc.dirichlet:
                u0[0], u0[-1] = bc.left, bc.right
        return Problem(self.grid, self.op, self.alpha, self.p, self.q, self.nl, source or self.source, u0,
                       self.tgrid, self.r_exp, self.s_exp, self.omega_r, self.cfg["name"])

    def perturbation_profile(self) -> np.ndarray:
        ic = self.cfg["initial"]
        if ic["random"]:
            rng = np.random.default_rng(self.seed)
            xs = (self.grid.x - self.grid.a) / (self.grid.b - self.grid.a)
            k = np.arange(1, 9)
            basis = np.sin if self.op.bc.dirichlet else np.cos
            prof = (rng.standard_normal(k.size) / k**2) @ basis(np.pi * np.outer(k, xs))
        else:
            prof = self.grid.field(expr.compile_expr(ic["profile"]))
        if self.op.bc.dirichlet:
            prof = prof.copy()
            prof[0] = prof[-1] = 0.0
        return _unit(prof, self.grid, ic["normalize"])

    def initial_state(self, u_inf) -> np.ndarray:
        ic = self.cfg["initial"]
        if ic["mode"] == "steady_plus":
            return np.asarray(u_inf, dtype=float) + float(ic["radius"]) * self.perturbation_profile()
        if ic["mode"] == "expr":
            u0 = self.grid.field(expr.compile_expr(ic["profile"]))
            if self.op.bc.dirichlet:
                u0[0], u0[-1] = self.op.bc.left, self.op.bc.right
            return u0
        return self.controlled()[0][0]

    def controlled(self):
        """Trajectory ``phi(t_n) g(x)`` and the sampled source that makes it the discrete solution.

        ``r_n = D_tau[phi]_n g + A g phi_n - q phi_n g + p f(phi_n g)`` with the
        L1 derivative on the run's time grid, so the scheme reproduces the
        trajectory up to the Newton tolerance. Returns ``(U, R, u_inf, r_inf)``.
        """
        ic = self.cfg["initial"]
        bc = self.op.bc
        if bc.dirichlet and (bc.left != 0.0 or bc.right != 0.0):
            raise ConfigError("operator.a_inf", "a source-controlled scenario needs homogeneous boundary data")
        g = self.grid.field(expr.compile_expr(ic["profile"]))
        if bc.dirichlet:
            g[0] = g[-1] = 0.0
        phi_fn = expr.compile_expr(ic["phi"], "t")
        t = self.tgrid.nodes
        phi = np.asarray(phi_fn(t), dtype=float)
        with np.errstate(all="ignore"):
            limit = float(phi_fn(1e300))
        phi_inf = limit if math.isfinite(limit) else float(phi[-1])
        W = CaputoWeights(self.tgrid, self.alpha, cache=False)
        dphi = np.zeros_like(phi)
        inc = np.diff(phi)
        for n in range(1, t.size):
            dphi[n] = float(W.row(n) @ inc[:n])
        A = assemble(self.op, self.grid)
        U = np.outer(phi, g)
        Ag = A.apply(g)
        R = np.outer(dphi, g) + np.outer(phi, Ag) - self.q[None, :] * U + self.p[None, :] * self.nl.f(U)
        u_inf = phi_inf * g
        r_inf = phi_inf * Ag - self.q * u_inf + self.p * self.nl.f(u_inf)
        return U, R, u_inf, r_inf

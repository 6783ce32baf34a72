"""Config-driven experiment runner.

One JSON file describes one experiment::

    {
      "kind": "hum-sidewise",
      "profile": [{"x_left": 0, "x_right": 1, "rho": [1, 0], "a": [1, 0]}],
      "grid": {"T": 2.5, "Nx": 400},
      "signals": {"target": {"shape": "bump", "center": 1.75, "width": 0.55}},
      "params": {},
      "tolerances": {"tol": 1e-6},
      "output": {"dir": "out"},
      "seed": 7
    }

``sidewave run --config exp.json`` writes plot-ready CSV files and a
``manifest.json`` (config echo, versions and derived quantities) into the
output directory.  Exit status: 0 success, 2 invalid config, 3 solver abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import mpmath
import numpy as np
import scipy

from . import __version__
from .coeffs import CoefficientProfile, Grid, GridError, ProfileError, cfl_ratio, compute_beta
from .fdsolver import SolverError, adjoint_solve, forward_solve
from .hum import ControlProblem, InfeasibleProblem, solve_sidewise, solve_simultaneous, write_control_csv
from .obslab import (
    InghamSpectrum,
    build_counterexample,
    counterexample_quotients,
    estimate_observability,
    estimate_two_step,
    ingham_time_sweep,
    transition_bracket,
    two_sided_observability,
    write_refinement_csv,
)
from .signals import SourceHminus, TimeSignal
from .spectral import DegenerateSpectrumError, eigensolve, write_eigen_csv

log = logging.getLogger(__name__)

KINDS = (
    "spectrum",
    "forward",
    "adjoint",
    "hum-sidewise",
    "hum-simultaneous",
    "observability",
    "ingham",
    "counterexample",
)
SHAPES = ("zero", "bump", "sine-burst", "random-seeded", "modes")
RNG_NAME = "PCG64"

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3

# signals read as functions of t; the rest are functions of x
TIME_SIGNALS = {"control", "source", "target"}
SPACE_SIGNALS = {"y0", "y1", "psi0", "psi1", "z0", "z1", "free_y0", "free_y1"}


class ConfigError(ValueError):
    def __init__(self, message: str, path: tuple = (), line: Optional[int] = None):
        super().__init__(message)
        self.path = tuple(path)
        self.line = line


def _default_profile() -> list[dict]:
    return [{"x_left": 0.0, "x_right": 1.0, "rho": [1.0, 0.0], "a": [1.0, 0.0]}]


@dataclass
class ExperimentConfig:
    kind: str
    profile: list = field(default_factory=_default_profile)
    grid: dict = field(default_factory=dict)
    signals: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    seed: Optional[int] = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("top level must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = sorted(set(data) - known)
        if extra:
            raise ConfigError(f"unknown key(s): {', '.join(extra)}", (extra[0],))
        if "kind" not in data:
            raise ConfigError("missing key 'kind'", ("kind",))
        for key in ("grid", "signals", "params", "tolerances", "output"):
            if key in data and not isinstance(data[key], dict):
                raise ConfigError(f"'{key}' must be an object", (key,))
        if "profile" in data and not isinstance(data["profile"], list):
            raise ConfigError("'profile' must be a list of pieces", ("profile",))
        seed = data.get("seed")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
            raise ConfigError("'seed' must be a non-negative integer", ("seed",))
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
        try:
            return cls.from_dict(data)
        except ConfigError as exc:
            exc.line = _locate(text, exc.path)
            raise

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    # resolved objects ----------------------------------------------------

    def build_profile(self) -> CoefficientProfile:
        return CoefficientProfile.from_pieces(self.profile)

    def build_grid(self, profile: CoefficientProfile) -> Grid:
        g = self.grid
        T, Nx = float(g["T"]), int(g["Nx"])
        if g.get("Nt") is not None:
            return Grid(profile.L, T, Nx, int(g["Nt"]))
        return Grid.for_profile(profile, T, Nx, float(g.get("cfl_safety", 0.9)))


def _locate(text: str, path: tuple) -> Optional[int]:
    """Line of the innermost key of ``path`` in the raw JSON text."""
    pos, found = 0, False
    for key in path:
        if not isinstance(key, str):
            continue
        idx = text.find(f'"{key}"', pos)
        if idx < 0:
            break
        pos, found = idx, True
    return text.count("\n", 0, pos) + 1 if found else None


# --------------------------------------------------------------------------
# named signal shapes


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(stream)])))


def evaluate_shape(spec: dict, t: np.ndarray, seed: Optional[int] = None, period: float = 1.0) -> np.ndarray:
    """Sample a named shape on the points ``t`` (time levels or grid nodes).

    bump: amplitude * exp(1 - 1/(1 - r^2)), r = (t - center) / width, zero for |r| >= 1.
    sine-burst: amplitude * sin(2 pi frequency (t - center)) * cos(pi r / 2)^2 on |r| < 1.
    random-seeded: sum_k c_k sin(k pi (t - start) / (end - start)) / k on [start, end],
      c_k standard normal from PCG64 seeded with (seed, stream).
    modes: sum_k c_k cos(k pi t / period) (or sin), k = 1, 2, ...; ``period`` is L for
      spatial data.
    """
    t = np.asarray(t, dtype=float)
    shape = spec.get("shape", "zero")
    amp = float(spec.get("amplitude", 1.0))
    if shape == "zero":
        return np.zeros_like(t)
    if shape in ("bump", "sine-burst"):
        c, w = float(spec["center"]), float(spec["width"])
        r = (t - c) / w
        inside = np.abs(r) < 1.0
        out = np.zeros_like(t)
        if shape == "bump":
            out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
        else:
            f = float(spec.get("frequency", 1.0 / w))
            out[inside] = np.sin(2 * np.pi * f * (t[inside] - c)) * np.cos(0.5 * np.pi * r[inside]) ** 2
        return amp * out
    if shape == "random-seeded":
        sd = spec.get("seed", seed)
        if sd is None:
            raise ConfigError("random-seeded shape needs a seed")
        a, b = float(spec["start"]), float(spec["end"])
        n = int(spec.get("n_modes", 8))
        coef = _rng(sd, int(spec.get("stream", 0))).standard_normal(n)
        inside = (t >= a) & (t <= b)
        out = np.zeros_like(t)
        k = np.arange(1, n + 1)
        arg = np.pi * np.outer((t[inside] - a) / (b - a), k)
        out[inside] = np.sin(arg) @ (coef / k)
        return amp * out
    if shape == "modes":
        coef = np.asarray(spec["coefficients"], dtype=float)
        k = np.arange(1, coef.size + 1)
        basis = np.sin if spec.get("basis", "cos") == "sin" else np.cos
        return amp * (basis(np.pi * np.outer(t / period, k)) @ coef)
    raise ConfigError(f"unknown shape '{shape}'")


def _shape_support(spec: dict) -> Optional[tuple[float, float]]:
    shape = spec.get("shape", "zero")
    if shape in ("bump", "sine-burst"):
        c, w = float(spec["center"]), float(spec["width"])
        return (c - w, c + w)
    if shape == "random-seeded":
        return (float(spec["start"]), float(spec["end"]))
    return None


# --------------------------------------------------------------------------
# validation


@dataclass
class Violation:
    path: tuple
    message: str

    def __str__(self) -> str:
        where = ".".join(str(p) for p in self.path)
        return f"{where}: {self.message}" if where else self.message


def _check_window(win, T, path, out, lo_min=0.0):
    try:
        a, b = float(win[0]), float(win[1])
    except (TypeError, ValueError, IndexError):
        out.append(Violation(path, f"window must be a pair of numbers, got {win!r}"))
        return
    if not (lo_min <= a < b <= T):
        out.append(Violation(path, f"window ({a}, {b}) not inside ({lo_min:.6g}, {T})"))


def validate(config: ExperimentConfig) -> list[Violation]:
    """All findings that would stop ``run``; empty when the config is usable."""
    out: list[Violation] = []
    if config.kind not in KINDS:
        out.append(Violation(("kind",), f"unknown kind '{config.kind}' (expected one of {', '.join(KINDS)})"))
        return out
    try:
        profile = config.build_profile()
    except (ProfileError, KeyError, TypeError, ValueError) as exc:
        out.append(Violation(("profile",), f"invalid profile: {exc}"))
        return out
    beta = compute_beta(profile)
    Lb = profile.L * beta

    if config.kind == "ingham":
        return out + _validate_ingham(config)

    g = config.grid
    for key in ("T", "Nx"):
        if key not in g:
            out.append(Violation(("grid", key), f"missing grid.{key}"))
    if out:
        return out
    T = float(g["T"])
    try:
        grid = config.build_grid(profile)
    except (GridError, ValueError, TypeError) as exc:
        out.append(Violation(("grid",), str(exc)))
        return out
    safety = float(g.get("cfl_safety", 0.9))
    ratio = cfl_ratio(profile, grid)
    if ratio > safety * (1 + 1e-12):
        out.append(Violation(("grid", "Nt"), f"CFL violated: dt/dt_max = {ratio:.4f} > {safety}"))

    if config.kind == "hum-sidewise" and T <= Lb:
        out.append(Violation(("grid", "T"), f"T ≤ Lβ (T = {T}, Lβ = {Lb})"))
    if config.kind == "hum-simultaneous" and T <= 2 * Lb:
        out.append(Violation(("grid", "T"), f"T ≤ 2Lβ (T = {T}, 2Lβ = {2 * Lb})"))

    for name, spec in config.signals.items():
        path = ("signals", name)
        if name not in TIME_SIGNALS | SPACE_SIGNALS:
            out.append(Violation(path, f"unknown signal '{name}'"))
            continue
        if not isinstance(spec, dict) or spec.get("shape", "zero") not in SHAPES:
            out.append(Violation(path, f"shape must be one of {', '.join(SHAPES)}"))
            continue
        if spec.get("shape") == "random-seeded" and spec.get("seed", config.seed) is None:
            out.append(Violation(path, "random-seeded shape needs a seed"))
        try:
            evaluate_shape(spec, np.zeros(1), seed=0)
        except (KeyError, TypeError, ValueError) as exc:
            out.append(Violation(path, f"bad shape parameters: {exc}"))
            continue
        sup = _shape_support(spec)
        if sup is not None:
            _check_window(sup, T if name in TIME_SIGNALS else profile.L, path, out)
        if "support" in spec:
            _check_window(spec["support"], T, path + ("support",), out)

    p = config.params
    if "window" in p:
        if config.kind == "hum-sidewise":
            _check_window(p["window"], T, ("params", "window"), out, lo_min=Lb)
        else:
            _check_window(p["window"], T, ("params", "window"), out)
    if config.kind == "observability" and p.get("two_step") and T <= 2 * Lb:
        out.append(Violation(("params", "two_step"), f"T ≤ 2Lβ (T = {T}, 2Lβ = {2 * Lb})"))
    if config.kind == "counterexample":
        x0 = p.get("x0")
        if x0 is None or not 0.0 < float(x0) < profile.L:
            out.append(Violation(("params", "x0"), f"x0 must lie in (0, L), got {x0!r}"))
        else:
            M = max(float(x0), profile.L - float(x0))
            if T <= 2 * M * beta:
                out.append(Violation(("grid", "T"), f"T ≤ 2Mβ with M = max(x0, L - x0) (T = {T}, 2Mβ = {2 * M * beta})"))
        if p.get("family", True) and config.seed is None and p.get("seed") is None:
            out.append(Violation(("seed",), "random source family needs a seed"))
    return out


def _validate_ingham(config: ExperimentConfig) -> list[Violation]:
    out = []
    p = config.params
    if p.get("family", "integers") not in ("integers", "plate"):
        out.append(Violation(("params", "family"), "family must be 'integers' or 'plate'"))
    if not p.get("T_list"):
        out.append(Violation(("params", "T_list"), "need a non-empty T_list"))
    elif any(float(T) <= 0 for T in p["T_list"]):
        out.append(Violation(("params", "T_list"), "all times must be positive"))
    Ns = p.get("N", [20, 80])
    Ns = [Ns] if isinstance(Ns, int) else Ns
    M = int(p.get("M", 2 * max(Ns) + 10))
    if max(Ns) > M:
        out.append(Violation(("params", "N"), f"N = {max(Ns)} exceeds the spectrum size M = {M}"))
    return out


# --------------------------------------------------------------------------
# running


def _write_csv(path: Path, header: list[str], columns: list) -> None:
    cols = [np.asarray(c) for c in columns]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in zip(*cols):
            wr.writerow([_fmt(v) for v in row])


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    return f"{float(v):.17g}"


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        x = float(v)
        return x if np.isfinite(x) else str(x)
    return v


def versions() -> dict:
    return {
        "sidewave": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "mpmath": mpmath.__version__,
    }


class _Context:
    def __init__(self, config: ExperimentConfig, out: Path):
        self.config = config
        self.out = out
        self.files: list[str] = []
        self.derived: dict[str, Any] = {}
        self.profile = config.build_profile()
        self.beta = compute_beta(self.profile)
        self.derived.update(beta=self.beta, L=self.profile.L, L_beta=self.profile.L * self.beta)
        self.grid = None
        if config.kind != "ingham":
            self.grid = config.build_grid(self.profile)
            g = self.grid
            self.derived.update(
                T=g.T, Nx=g.Nx, Nt=g.Nt, dx=g.dx, dt=g.dt, cfl_ratio=cfl_ratio(self.profile, g)
            )

    def csv(self, name: str, header, columns) -> None:
        _write_csv(self.out / name, list(header), columns)
        self.files.append(name)

    def time_signal(self, name: str) -> np.ndarray:
        spec = self.config.signals.get(name, {"shape": "zero"})
        return evaluate_shape(spec, self.grid.t, self.config.seed)

    def space_signal(self, name: str) -> Optional[np.ndarray]:
        spec = self.config.signals.get(name)
        if spec is None:
            return None
        return evaluate_shape(spec, self.grid.x, self.config.seed, period=self.profile.L)


def _run_spectrum(ctx: _Context) -> None:
    p = ctx.config.params
    K = int(p.get("K", 20))
    pairs = eigensolve(ctx.profile, ctx.grid, K, allow_full=bool(p.get("allow_full", False)))
    write_eigen_csv(ctx.out / "eigen.csv", pairs)
    ctx.files.append("eigen.csv")
    lam = np.array([e.lam for e in pairs])
    if ctx.profile.is_constant:
        k = np.arange(1, K + 1)
        rho, a = ctx.profile.rho(0.0), ctx.profile.a(0.0)
        exact = (a / rho) * (np.pi * (k - 1) / ctx.profile.L) ** 2
        rel = np.abs(lam - exact) / np.maximum(exact, 1.0)
        ctx.derived["max_rel_error_closed_form"] = float(rel.max())


def _run_forward(ctx: _Context) -> None:
    u = ctx.time_signal("control")
    res = forward_solve(
        ctx.profile, ctx.grid, ctx.space_signal("y0"), ctx.space_signal("y1"), TimeSignal(u, ctx.grid.dt),
        record_energy=True,
    )
    t = ctx.grid.t
    ctx.csv("traces.csv", ["t", "u", "y_0", "y_L"], [t, u, res.trace_y0.samples, res.trace_yL.samples])
    t_mid = t[:-1] + 0.5 * ctx.grid.dt
    ctx.csv("energy.csv", ["t", "energy"], [t_mid, res.energy])
    yT, vT = res.final_state
    ctx.csv("final_state.csv", ["x", "y", "y_t"], [ctx.grid.x, yT, vT])
    E = res.energy
    ctx.derived["energy_final"] = float(E[-1])
    if not np.any(u) and E.max() > 0:
        # without control the discrete energy is an invariant
        ctx.derived["energy_drift_rel"] = float(np.ptp(E) / E.max())


def _run_adjoint(ctx: _Context) -> None:
    spec = ctx.config.signals.get("source", {"shape": "zero"})
    support = tuple(spec.get("support", _shape_support(spec) or (0.0, ctx.grid.T)))
    s = SourceHminus.from_rate(ctx.time_signal("source"), ctx.grid.dt, support)
    psi0, psi1 = ctx.space_signal("psi0"), ctx.space_signal("psi1")
    terminal = None if psi0 is None and psi1 is None else (psi0, psi1)
    res = adjoint_solve(ctx.profile, ctx.grid, s, terminal)
    ctx.csv("traces.csv", ["t", "s", "psi_0", "psi_L"],
            [ctx.grid.t, s.s.samples, res.trace_psi0.samples, res.trace_psiL.samples])
    ctx.derived["support"] = list(support)


def _control_problem(ctx: _Context, simultaneous: bool) -> ControlProblem:
    cfg = ctx.config
    tol = cfg.tolerances
    p = TimeSignal(ctx.time_signal("target"), ctx.grid.dt)
    kw = dict(
        window=cfg.params.get("window"),
        y0=ctx.space_signal("y0"),
        y1=ctx.space_signal("y1"),
        tol=float(tol.get("tol", 1e-6)),
        max_iter=int(tol.get("max_iter", 500)),
        eps_rel=float(tol.get("eps_rel", 1e-8)),
        method=cfg.params.get("method", "auto"),
    )
    if "filter_cutoff" in cfg.params:
        kw["filter_cutoff"] = cfg.params["filter_cutoff"]
    if simultaneous:
        z0, z1 = ctx.space_signal("z0"), ctx.space_signal("z1")
        if cfg.params.get("terminal") == "snapshot" or (z0 is None and z1 is None):
            # targets taken from a free trajectory, hence reachable
            free = forward_solve(ctx.profile, ctx.grid, ctx.space_signal("free_y0"), ctx.space_signal("free_y1"))
            z0, z1 = free.final_state
        n = ctx.grid.Nx + 1
        kw["z0"] = np.zeros(n) if z0 is None else z0
        kw["z1"] = np.zeros(n) if z1 is None else z1
    return ControlProblem(ctx.profile, ctx.grid, p, **kw)


def _run_hum(ctx: _Context, simultaneous: bool) -> None:
    prob = _control_problem(ctx, simultaneous)
    sol = solve_simultaneous(prob) if simultaneous else solve_sidewise(prob)
    write_control_csv(ctx.out / "control.csv", sol)
    ctx.files.append("control.csv")
    ctx.csv("source.csv", ["t", "S", "s"], [ctx.grid.t, sol.s_opt.S.samples, sol.s_opt.s.samples])
    ctx.csv("convergence.csv", ["iteration", "residual"],
            [np.arange(len(sol.gradient_norm_history)), sol.gradient_norm_history])
    if simultaneous:
        ctx.csv("terminal_targets.csv", ["x", "z0", "z1"], [ctx.grid.x, prob.z0, prob.z1])
    ctx.derived.update(window=list(prob.window), result=sol.summary())


def _run_observability(ctx: _Context) -> None:
    p = ctx.config.params
    refine = p.get("refine")
    rep = estimate_observability(
        ctx.profile, ctx.grid, window=p.get("window"), norm_pair=tuple(p.get("norm_pair", ("H-1", "L2"))),
        n_modes=int(p.get("n_modes", 24)), refine=refine,
    )
    write_refinement_csv(ctx.out / "refinement.csv", rep)
    ctx.files.append("refinement.csv")
    ctx.derived["observability"] = _report_dict(rep)
    if p.get("two_step"):
        rep2 = estimate_two_step(
            ctx.profile, ctx.grid, n_modes=int(p.get("n_modes_two_step", 12)),
            n_terminal=int(p.get("n_terminal", 12)), refine=refine,
        )
        write_refinement_csv(ctx.out / "two_step_refinement.csv", rep2)
        ctx.files.append("two_step_refinement.csv")
        ctx.derived["two_step"] = _report_dict(rep2)


def _report_dict(rep) -> dict:
    return {
        "constant_estimate": rep.constant_estimate,
        "window": list(rep.window),
        "norms": list(rep.norms),
        "sample_count": rep.sample_count,
        "refinement": rep.refinement,
        "refinement_ratio": rep.refinement_ratio(),
        "subspace_trend": rep.subspace_trend,
        "flags": rep.flags,
        "notes": rep.notes,
    }


def _run_ingham(ctx: _Context) -> None:
    p = ctx.config.params
    Ns = p.get("N", [20, 80])
    Ns = [Ns] if isinstance(Ns, int) else [int(n) for n in Ns]
    M = int(p.get("M", 2 * max(Ns) + 10))
    T_list = [float(T) for T in p["T_list"]]
    family = p.get("family", "integers")
    sp = InghamSpectrum.integers(M, T_list[0]) if family == "integers" else InghamSpectrum.plate(M, T_list[0])
    if p.get("scale") is not None:
        sp = sp.scaled(float(p["scale"]))
    if p.get("shift") is not None:
        sp = sp.shifted(float(p["shift"]))
    rows = ingham_time_sweep(sp, Ns, T_list, ratio_threshold=float(p.get("ratio_threshold", 0.5)))
    cols = ["T", "N", "C1", "C2"] + (["stable"] if "stable" in rows[0] else [])
    ctx.csv("ingham.csv", cols, [[r[c] for r in rows] for c in cols])
    br = transition_bracket(rows)
    ctx.derived.update(gap=sp.gap, critical_time=sp.critical_time, transition_bracket=br and list(br))


def _run_counterexample(ctx: _Context) -> None:
    cfg = ctx.config
    p = cfg.params
    x0 = float(p["x0"])
    mode = int(p.get("mode", 1))
    table = {}
    for nx in sorted({ctx.grid.Nx, *p.get("refine", [])}):
        g = ctx.grid if nx == ctx.grid.Nx else Grid.for_profile(ctx.profile, ctx.grid.T, nx)
        cx = build_counterexample(ctx.profile, g, x0, mode)
        one, two = counterexample_quotients(cx, ctx.profile)
        table[nx] = (float(np.abs(cx.trace_psi0.samples).max()), cx.s_hminus(), cx.residual_error, one, two)
        if nx == ctx.grid.Nx:
            ctx.csv("counterexample_traces.csv", ["t", "s", "psi_0", "psi_L"],
                    [g.t, cx.s.samples, cx.trace_psi0.samples, cx.trace_psiL.samples])
            ctx.derived["x0_node"] = cx.x0
    rows = list(zip(*[(nx, *v) for nx, v in table.items()]))
    ctx.csv("counterexample.csv",
            ["Nx", "max_abs_psi_0", "s_Hminus", "residual", "one_sided", "two_sided"], rows)
    if p.get("family", True):
        seed = p.get("seed", cfg.seed)
        rep = two_sided_observability(
            ctx.profile, ctx.grid, x0, n_samples=int(p.get("n_samples", 16)),
            n_modes=int(p.get("n_modes", 12)), seed=int(seed), refine=p.get("refine"),
        )
        write_refinement_csv(ctx.out / "two_sided_refinement.csv", rep)
        ctx.files.append("two_sided_refinement.csv")
        ctx.derived["two_sided"] = _report_dict(rep)


_RUNNERS = {
    "spectrum": _run_spectrum,
    "forward": _run_forward,
    "adjoint": _run_adjoint,
    "hum-sidewise": lambda ctx: _run_hum(ctx, False),
    "hum-simultaneous": lambda ctx: _run_hum(ctx, True),
    "observability": _run_observability,
    "ingham": _run_ingham,
    "counterexample": _run_counterexample,
}


@dataclass
class RunOutcome:
    status: int
    out_dir: Optional[Path]
    messages: list[str]
    manifest: Optional[dict] = None


def run(config: ExperimentConfig, out_dir=None) -> RunOutcome:
    """Validate, execute and write CSVs plus ``manifest.json``."""
    problems = validate(config)
    if problems:
        return RunOutcome(EXIT_INVALID, None, [str(v) for v in problems])
    out = Path(out_dir or config.output.get("dir", "sidewave_out"))
    out.mkdir(parents=True, exist_ok=True)
    try:
        ctx = _Context(config, out)
        _RUNNERS[config.kind](ctx)
    except (SolverError, InfeasibleProblem, GridError, DegenerateSpectrumError) as exc:
        return RunOutcome(EXIT_SOLVER, out, [f"solver abort: {type(exc).__name__}: {exc}"])
    manifest = {
        "config": config.to_dict(),
        "versions": versions(),
        "rng": RNG_NAME,
        "derived": _jsonable(ctx.derived),
        "files": sorted(ctx.files),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return RunOutcome(EXIT_OK, out, [], manifest)


# --------------------------------------------------------------------------
# command line


def _load_config(path, kind: Optional[str], seed: Optional[int]):
    text = Path(path).read_text()
    cfg = ExperimentConfig.from_json(text)
    if kind is not None and cfg.kind != kind:
        raise ConfigError(f"config kind '{cfg.kind}' does not match subcommand '{kind}'", ("kind",),
                          _locate(text, ("kind",)))
    if seed is not None:
        cfg.seed = seed
    return cfg, text


def _report_invalid(path, text, problems) -> None:
    for v in problems:
        line = _locate(text, v.path) if text is not None else None
        prefix = f"{path}:{line}" if line else str(path)
        print(f"{prefix}: {v}", file=sys.stderr)


def _run_one(path, kind, seed, out) -> int:
    try:
        cfg, text = _load_config(path, kind, seed)
    except ConfigError as exc:
        prefix = f"{path}:{exc.line}" if exc.line else str(path)
        print(f"{prefix}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    problems = validate(cfg)
    if problems:
        _report_invalid(path, text, problems)
        return EXIT_INVALID
    res = run(cfg, out)
    for m in res.messages:
        print(f"{path}: {m}", file=sys.stderr)
    if res.status == EXIT_OK:
        print(f"{path}: wrote {len(res.manifest['files'])} file(s) + manifest.json to {res.out_dir}")
    return res.status


def _validate_only(path, seed) -> int:
    try:
        cfg, text = _load_config(path, None, seed)
    except ConfigError as exc:
        prefix = f"{path}:{exc.line}" if exc.line else str(path)
        print(f"{prefix}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    problems = validate(cfg)
    _report_invalid(path, text, problems)
    if not problems:
        print(f"{path}: ok")
    return EXIT_INVALID if problems else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sidewave", description="Sidewise control experiments for 1-d waves.")
    ap.add_argument("--version", action="version", version=f"sidewave {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment JSON file")
        p.add_argument("--out", default=None, help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, default=None, help="RNG seed (overrides config seed)")
        p.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("run", help="run the experiment named by the config's kind"))
    common(sub.add_parser("validate", help="check a config without running it"))
    b = sub.add_parser("batch", help="run several configs in parallel, one output directory each")
    b.add_argument("--config", nargs="+", required=True)
    b.add_argument("--out", default="sidewave_batch")
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    b.add_argument("-v", "--verbose", action="store_true")
    for kind in KINDS:
        common(sub.add_parser(kind, help=f"run a '{kind}' experiment"))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "validate":
        return _validate_only(args.config, args.seed)
    if args.command == "batch":
        outs = [str(Path(args.out) / Path(c).stem) for c in args.config]
        with ProcessPoolExecutor(max_workers=max(1, args.jobs)) as pool:
            codes = list(pool.map(_run_one, args.config, [None] * len(outs), [args.seed] * len(outs), outs))
        return max(codes)
    kind = None if args.command == "run" else args.command
    return _run_one(args.config, kind, args.seed, args.out)


if __name__ == "__main__":
    sys.exit(main())

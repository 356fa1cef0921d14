"""Named scenarios, strict configuration parsing and the engine pipeline."""
from __future__ import annotations

import copy
import itertools
import logging
import math
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .classical import PhasePoint, find_periodic_orbits, integrate_hamilton
from .doublesolution import (attach_soliton, build_wfields, evolve_soliton,
                             recurrence_consistency, soliton_ensemble_statistics)
from .exactqm import (Grid, _energy_scale, coherent_state, fidelity, gaussian, l2_distance,
                      propagate_exact, well_eigenstate)
from .pilotwave import equivariance_distance, integrate_bohm, mismatch_report, run_ensemble
from .potentials import PotentialModel
from .semiclassical import BVPConfig, branch_frames, propagate_semiclassical, sign_split

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

logger = logging.getLogger(__name__)

SCENARIOS = ("free_gaussian", "harmonic_coherent", "well_eigenstate", "well_packet",
             "two_orbit_recurrence")
ENGINES = ("exact", "semiclassical", "bohm", "soliton")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


class EngineError(RuntimeError):
    pass


# defaults per scenario; every key here is a valid key
_BASE = {
    "scenario": None,
    "out": "runs",
    "engines": list(ENGINES),
    "model": {"mass": 1.0, "hbar": 1.0, "omega": None, "length": None, "coefficients": None},
    "grid": {"x_min": None, "x_max": None, "n": 1024},
    "state": {"center": 0.0, "momentum": 0.0, "sigma": 1.0, "level": 1,
              "weights": [1.0, 0.5], "probe": None},
    "time": {"duration": None, "dt": None, "stride": None},
    "ensemble": {"n": 10000, "seed": 0, "bins": 50},
    "output": {"frame_stride": 0, "binary": False},
    "sweep": {},
}

_SCENARIO_DEFAULTS = {
    "free_gaussian": {
        "grid": {"x_min": -20.0, "x_max": 20.0},
        "state": {"center": 0.0, "momentum": 2.0, "sigma": 1.0},
        "time": {"duration": 1.0},
    },
    "harmonic_coherent": {
        "model": {"omega": 1.0},
        "grid": {"x_min": -10.0, "x_max": 10.0, "n": 512},
        "state": {"center": 2.0, "momentum": 0.0},
        "time": {"duration": math.pi / 4},
    },
    "well_eigenstate": {
        "model": {"length": 1.0},
        "grid": {"n": 512},
        "state": {"level": 5, "center": 0.5, "probe": 0.33},
    },
    "well_packet": {
        "model": {"length": 1.0, "hbar": 0.01},
        "state": {"center": 0.4, "momentum": 1.0, "sigma": 0.04},
        "time": {"duration": 0.5},
    },
    "two_orbit_recurrence": {
        # frames dense enough for the guidance equation would not fit in memory at this N
        "engines": ["exact", "semiclassical", "soliton"],
        "model": {"length": 1.0, "hbar": 0.001},
        "grid": {"n": 8192},
        "state": {"center": 0.5, "momentum": 1.0, "sigma": 0.05, "weights": [1.0, 0.5]},
        "ensemble": {"n": 2000},
    },
}

_SEMANTIC_EXCLUDE = ("out",)


def _line_of(text, key):
    if text is None:
        return None
    pat = re.compile(rf"^\s*\"?{re.escape(key)}\"?\s*=")
    for i, line in enumerate(text.splitlines(), start=1):
        if pat.match(line):
            return i
    return None


def _where(text, path):
    line = _line_of(text, path.split(".")[-1])
    return f"{path} (line {line})" if line else path


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _check_keys(raw, ref, text, prefix=""):
    for k, v in raw.items():
        path = f"{prefix}{k}"
        if k not in ref:
            raise ConfigError(f"unknown key {_where(text, path)}")
        if isinstance(ref[k], dict) and k != "sweep":
            if not isinstance(v, dict):
                raise ConfigError(f"{_where(text, path)} must be a table")
            _check_keys(v, ref[k], text, path + ".")


def _get(d, path):
    for part in path.split("."):
        d = d[part]
    return d


def _set(d, path, value):
    parts = path.split(".")
    for part in parts[:-1]:
        d = d[part]
    d[parts[-1]] = value


@dataclass
class ScenarioConfig:
    """Fully resolved configuration of one run (sweeps already expanded)."""

    data: dict
    sweep: dict = field(default_factory=dict)

    @property
    def scenario(self):
        return self.data["scenario"]

    @property
    def engines(self):
        return list(self.data["engines"])

    @property
    def out(self):
        return Path(self.data["out"])

    @property
    def seed(self):
        return self.data["ensemble"]["seed"]

    def semantic(self):
        d = copy.deepcopy(self.data)
        for k in _SEMANTIC_EXCLUDE:
            d.pop(k, None)
        d.pop("sweep", None)
        return d

    def hash(self):
        return io.config_hash(self.semantic())

    def model(self):
        m = self.data["model"]
        s = self.scenario
        if s == "free_gaussian":
            return PotentialModel.free(m["mass"], m["hbar"])
        if s == "harmonic_coherent":
            return PotentialModel.harmonic(m["omega"], m["mass"], m["hbar"])
        return PotentialModel.infinite_well(m["length"], m["mass"], m["hbar"])

    def grid(self):
        g = self.data["grid"]
        model = self.model()
        return Grid.for_model(model, g["n"], g["x_min"], g["x_max"])

    def expand(self):
        """One config per point of the sweep grid (itself if no sweep)."""
        if not self.sweep:
            return [self]
        keys = sorted(self.sweep)
        runs = []
        for i, combo in enumerate(itertools.product(*(self.sweep[k] for k in keys))):
            d = copy.deepcopy(self.data)
            for k, v in zip(keys, combo):
                _set(d, k, v)
            d["out"] = str(Path(self.data["out"]) / f"run_{i:03d}")
            d["sweep"] = {}
            runs.append(_validate(d, None))
        return runs


def _resolve_time(d, model, grid):
    t = d["time"]
    s = d["scenario"]
    st = d["state"]
    if t["duration"] is None:
        if s == "well_eigenstate":
            p = st["level"] * math.pi * model.hbar / model.length
            t["duration"] = 2 * model.length * model.mass / p
        elif s == "two_orbit_recurrence":
            t["duration"] = 2 * model.length * model.mass / abs(st["momentum"])
        else:
            raise ConfigError("time.duration is required")
    if t["dt"] is None:
        psi0 = build_initial_state(ScenarioConfig(d), model, grid)[0]
        # phase-stability rule dt * E_max / hbar <= 0.1, and at least 1000 steps
        stab = 0.1 * model.hbar / _energy_scale(psi0, model)
        t["dt"] = float(t["duration"] / max(1000, math.ceil(t["duration"] / stab)))
    if t["stride"] is None:
        n_steps = math.ceil(t["duration"] / t["dt"] - 1e-9)
        t["stride"] = max(1, n_steps // 100)


def _validate(d, text):
    def need(cond, path, msg):
        if not cond:
            raise ConfigError(f"{_where(text, path)}: {msg}")

    need(d["scenario"] in SCENARIOS, "scenario", f"must be one of {', '.join(SCENARIOS)}")
    eng = d["engines"]
    need(isinstance(eng, list) and eng and all(e in ENGINES for e in eng), "engines",
         f"must be a non-empty subset of {', '.join(ENGINES)}")
    m = d["model"]
    for k in ("mass", "hbar"):
        need(isinstance(m[k], (int, float)) and m[k] > 0, f"model.{k}", "must be positive")
    if d["scenario"] == "harmonic_coherent":
        need(m["omega"] is not None and m["omega"] > 0, "model.omega", "must be positive")
    if d["scenario"].startswith("well") or d["scenario"] == "two_orbit_recurrence":
        need(m["length"] is not None and m["length"] > 0, "model.length", "must be positive")
    need(m["coefficients"] is None, "model.coefficients",
         "polynomial potentials are not used by the named scenarios")
    g = d["grid"]
    n = g["n"]
    need(isinstance(n, int) and n >= 16 and not n & (n - 1), "grid.n", "must be a power of two >= 16")
    st = d["state"]
    need(st["sigma"] > 0, "state.sigma", "must be positive")
    need(isinstance(st["level"], int) and st["level"] >= 1, "state.level", "must be a positive integer")
    need(len(st["weights"]) == 2 and all(w > 0 for w in st["weights"]), "state.weights",
         "must be two positive numbers")
    t = d["time"]
    for k in ("duration", "dt"):
        need(t[k] is None or t[k] > 0, f"time.{k}", "must be positive")
    need(t["stride"] is None or (isinstance(t["stride"], int) and t["stride"] >= 1), "time.stride",
         "must be a positive integer")
    e = d["ensemble"]
    need(isinstance(e["n"], int) and e["n"] >= 1, "ensemble.n", "must be a positive integer")
    need(isinstance(e["seed"], int) and e["seed"] >= 0, "ensemble.seed", "must be a non-negative integer")
    need(isinstance(e["bins"], int) and e["bins"] >= 1, "ensemble.bins", "must be a positive integer")
    if "soliton" in eng:
        need(e["n"] >= 1000, "ensemble.n", "soliton statistics need n >= 1000")
    for k, v in d["sweep"].items():
        try:
            _get(_BASE, k)
        except (KeyError, TypeError):
            raise ConfigError(f"unknown sweep key {_where(text, k)}") from None
        need(isinstance(v, list) and v, f"sweep.{k}", "must be a non-empty list")
    try:
        model = ScenarioConfig(d).model()
        grid = ScenarioConfig(d).grid()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not model.is_well:
        need(g["x_max"] > g["x_min"], "grid.x_max", "must exceed grid.x_min")
        need(grid.x_min < st["center"] < grid.x_max, "state.center", "must lie inside the grid")
    else:
        need(0 < st["center"] < model.length, "state.center", "must lie inside the well")
    if st["probe"] is not None:
        lo, hi = (0.0, model.length) if model.is_well else (grid.x_min, grid.x_max)
        need(lo < st["probe"] < hi, "state.probe", "must lie inside the domain")
    sweep = d["sweep"]
    if not sweep:
        _resolve_time(d, model, grid)
    return ScenarioConfig(d, dict(sweep))


def parse_config(text, overrides=None) -> ScenarioConfig:
    """Parse TOML text into a validated config.

    ``overrides`` maps dotted keys (``"model.hbar"``, ``"scenario"``) to
    values applied after parsing; ``"sweep"`` entries add sweep lists.
    """
    try:
        raw = tomllib.loads(text) if text else {}
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"syntax error: {exc}") from None
    _check_keys(raw, _BASE, text)
    overrides = dict(overrides or {})
    scenario = overrides.get("scenario", raw.get("scenario"))
    if scenario is None:
        raise ConfigError("missing required key scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"{_where(text, 'scenario')}: unknown scenario {scenario!r}")
    d = _merge(_merge(_BASE, _SCENARIO_DEFAULTS[scenario]), raw)
    for k, v in overrides.items():
        if k == "sweep":
            d["sweep"].update(v)
            continue
        try:
            _get(_BASE, k)
        except (KeyError, TypeError):
            raise ConfigError(f"unknown override key {k}") from None
        _set(d, k, v)
    d["scenario"] = scenario
    return _validate(d, text)


def load_config(path, overrides=None):
    return parse_config(Path(path).read_text(encoding="utf-8"), overrides)


# ---------------------------------------------------------------------------
# initial states

def build_initial_state(cfg: ScenarioConfig, model=None, grid=None):
    """(psi0, sheet components) for the scenario."""
    model = model or cfg.model()
    grid = grid or cfg.grid()
    st = cfg.data["state"]
    s = cfg.scenario
    if s == "harmonic_coherent":
        psi = coherent_state(grid, model, st["center"], st["momentum"])
        return psi, [psi]
    if s == "well_eigenstate":
        psi = well_eigenstate(grid, model, st["level"])
        return psi, sign_split(psi)
    if s == "two_orbit_recurrence":
        A1, A2 = st["weights"]
        a = gaussian(grid, model, st["center"], st["momentum"], st["sigma"])
        b = gaussian(grid, model, st["center"], 2 * st["momentum"], st["sigma"])
        norm = np.sqrt(np.sum(np.abs(math.sqrt(A1) * a.values + math.sqrt(A2) * b.values) ** 2) * grid.dx)
        comps = [a.with_values(math.sqrt(A1) * a.values / norm),
                 b.with_values(math.sqrt(A2) * b.values / norm)]
        return a.with_values(comps[0].values + comps[1].values), comps
    psi = gaussian(grid, model, st["center"], st["momentum"], st["sigma"])
    return psi, [psi]


def default_probe(cfg: ScenarioConfig, psi0):
    st = cfg.data["state"]
    if st["probe"] is not None:
        return float(st["probe"])
    if cfg.scenario in ("free_gaussian", "harmonic_coherent"):
        sig = st["sigma"] if cfg.scenario == "free_gaussian" else float(
            np.sqrt(psi0.hbar / (2 * psi0.mass * cfg.data["model"]["omega"])))
        return float(st["center"] + sig)
    return float(st["center"])


# ---------------------------------------------------------------------------
# engines

@dataclass
class RunReport:
    scenario: str
    config: dict
    config_hash: str
    seed: int
    sections: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def failed(self):
        return [k for k, v in self.sections.items() if v.get("status") == "failed"]

    def to_dict(self):
        return {"scenario": self.scenario, "config": self.config, "config_hash": self.config_hash,
                "seed": self.seed, "sections": self.sections}


class _Run:
    def __init__(self, cfg: ScenarioConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.model = cfg.model()
        self.grid = cfg.grid()
        self.psi0, self.components = build_initial_state(cfg, self.model, self.grid)
        t = cfg.data["time"]
        self.duration, self.dt, self.stride = t["duration"], t["dt"], t["stride"]
        self._frames = None
        self._wframes = None

    @property
    def frames(self):
        if self._frames is None:
            self._frames = propagate_exact(self.psi0, self.model, self.duration, self.dt, self.stride)
        return self._frames

    @property
    def wframes(self):
        if self._wframes is None:
            times = [f.time for f in self.frames]
            idx = np.unique(np.linspace(0, len(times) - 1, min(len(times), 21)).round().astype(int))
            states = branch_frames(self.psi0, self.model, [times[i] for i in idx],
                                   components=self.components)
            self._wframes = [build_wfields(s, 1.0) for s in states]
        return self._wframes

    def exact(self):
        frames = self.frames
        drift = max(abs(f.norm() - 1) for f in frames)
        fs = self.cfg.data["output"]["frame_stride"]
        picks = range(0, len(frames), fs) if fs else sorted({0, len(frames) - 1})
        fdir = self.out / "frames"
        fdir.mkdir(exist_ok=True)
        for i in picks:
            io.write_frame_csv(fdir / f"frame_{i:04d}.csv", frames[i])
            if self.cfg.data["output"]["binary"]:
                io.write_binary_frame(fdir / f"frame_{i:04d}.bin", frames[i])
        return {"status": "ok", "frames": len(frames), "norm_drift": drift,
                "final_time": frames[-1].time}

    def semiclassical(self):
        final = self.frames[-1]
        sc = propagate_semiclassical(self.psi0, self.model, self.duration, BVPConfig(),
                                     return_mask=True)
        res = {"status": "ok", "l2_error": l2_distance(sc.psi, final),
               "fidelity": fidelity(sc.psi, final), "masked_fraction": sc.masked_fraction}
        state = branch_frames(self.psi0, self.model, [self.duration],
                              components=self.components)[0]
        io.write_branch_csv(self.out / "branches.csv", state)
        res["branches"] = len(state.branches)
        res["branch_labels"] = sorted({b.label for b in state.dominant()})
        res["stitching_ambiguities"] = len(state.ambiguities)
        if self.cfg.scenario == "two_orbit_recurrence":
            res["recurrence"] = self._recurrence()
        return res

    def _recurrence(self):
        st = self.cfg.data["state"]
        p1 = st["momentum"]
        E = [p1**2 / (2 * self.model.mass), (2 * p1) ** 2 / (2 * self.model.mass)]
        T = self.duration
        orbits = find_periodic_orbits(self.model, st["center"], (0.999 * T, 1.001 * T), E,
                                      width=st["sigma"])
        orbits = [o for o in orbits if o.trajectory.p[0] * p1 > 0]
        chk = recurrence_consistency([self.psi0, self.frames[-1]], orbits, tuple(st["weights"]))
        return {"predicted": chk.predicted, "measured": chk.measured,
                "relative_error": chk.relative_error, "delta_action_over_hbar":
                chk.delta_action / self.model.hbar}

    def _probe_path(self, x0):
        """Classical path from the probe on the first sheet with support there."""
        bump = attach_soliton(self.wframes[0], x0, seed=self.cfg.seed)
        step = self.dt if self.model.kind == "harmonic" else self.duration / 512
        traj = integrate_hamilton(self.model, PhasePoint(bump.origin, bump.momentum),
                                  self.duration, step, energy_tol=None)
        return bump, traj

    def bohm(self):
        frames = self.frames
        e = self.cfg.data["ensemble"]
        ens = run_ensemble(frames, e["n"], e["seed"])
        io.write_ensemble_csv(self.out / "ensemble.csv", ens)
        x0 = default_probe(self.cfg, self.psi0)
        probe = integrate_bohm(frames, x0)
        _, traj = self._probe_path(x0)
        io.write_trajectory_csv(self.out / "classical_probe.csv", traj)
        mm = mismatch_report(probe, traj)
        return {"status": "ok", "tv_initial": equivariance_distance(ens, frames[0], e["bins"]),
                "tv_final": equivariance_distance(ens, frames[-1], e["bins"]),
                "crossing_violations": ens.crossing_violations(),
                "node_flagged": int((ens.flagged > 0).sum()),
                "probe_x0": x0, "mismatch": mm.to_dict()}

    def soliton(self):
        e = self.cfg.data["ensemble"]
        x0 = default_probe(self.cfg, self.psi0)
        bump, traj = self._probe_path(x0)
        hist = evolve_soliton(bump, self.wframes)
        io.write_soliton_csv(self.out / "soliton.csv", [hist])
        stats = soliton_ensemble_statistics(self.wframes, e["n"], e["seed"], self.duration,
                                            e["bins"], exact=self.frames[-1], psi0=self.psi0)
        return {"status": "ok", "probe_x0": x0, "branch_index": hist.branch_index,
                "path_length": traj.path_length(), "truncated": hist.reason,
                "final_position": float(hist.x[-1]) if hist.x.size else None,
                "final_peak": float(hist.a[-1]) if hist.a.size else None,
                "statistics": stats.to_dict()}


def run_scenario(cfg: ScenarioConfig, out=None) -> RunReport:
    """Run the requested engines and write CSV/JSON artifacts to the output directory."""
    out = Path(out) if out is not None else cfg.out
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(cfg.scenario, cfg.semantic(), cfg.hash(), cfg.seed)
    run = _Run(cfg, out)
    order = [e for e in ENGINES if e in cfg.engines]
    for name in order:
        t0 = time.perf_counter()
        try:
            report.sections[name] = getattr(run, name)()
        except Exception as exc:  # recorded per section; exit status reflects it
            logger.exception("engine %s failed", name)
            report.sections[name] = {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}
        report.timings[name] = time.perf_counter() - t0
    io.write_json(out / "report.json", report.to_dict())
    io.write_json(out / "timings.json", report.timings)
    return report

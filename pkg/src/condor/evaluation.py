"""Deterministic policy evaluation: lap timing, conditioning sweeps,
relative-laptime statistics against a fixed-setting reference, perception
error, plot-ready exports, and the embedded published reference curves."""

import csv
import io
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import net
from .conditioning import ConditioningSpec
from .dynamics import QuadParams
from .env import EnvConfig, RaceEnv, RewardParams, camera_error, thrust_limit
from .track import TrackSpec


class IncompatibleConditioning(ValueError):
    """Checkpoint conditioning mode does not match the requested signal."""


class NoOverlap(ValueError):
    """No grid point completed by both policies."""


@dataclass(eq=False)
class Trajectory:
    t: np.ndarray
    p: np.ndarray       # (T, 3)
    q: np.ndarray       # (T, 4)
    v: np.ndarray       # (T, 3)
    zeta: np.ndarray
    gate_idx: np.ndarray
    c_cmd: np.ndarray

    def __len__(self):
        return len(self.t)


@dataclass(eq=False)
class EpisodeResult:
    laptimes: list
    crashed: bool
    mean_speed: float
    max_speed: float
    perc_error_deg: float
    twr_violation_frac: float
    trajectory: Trajectory | None = None


@dataclass(eq=False)
class SweepTable:
    zeta: np.ndarray
    laptime: np.ndarray   # nan where failed
    success: np.ndarray   # bool

    def __post_init__(self):
        self.zeta = np.asarray(self.zeta, dtype=np.float64)
        self.laptime = np.asarray(self.laptime, dtype=np.float64)
        self.success = np.asarray(self.success, dtype=bool)
        if np.any(np.diff(self.zeta) <= 0):
            raise ValueError("sweep grid must be strictly increasing")


@dataclass
class RelStats:
    avg_rel_pct: float
    max_rel_pct: float
    n_points: int = 0


PAPER_GRID = np.round(np.arange(14) * 0.225 + 1.575, 6)


def conditioning_from_meta(meta: dict) -> ConditioningSpec:
    c = meta.get("cond", {})
    return ConditioningSpec(**c) if c else ConditioningSpec()


def env_config_from_meta(meta: dict, **overrides) -> EnvConfig:
    c = dict(meta.get("env", {}))
    c.update(overrides)
    return EnvConfig(**c)


def quad_params_from_meta(meta: dict) -> QuadParams:
    c = meta.get("quad")
    if not c:
        return QuadParams()
    from .cli import quad_params_from_dict  # config schema owns the field mapping
    return quad_params_from_dict(c)


def _load_checkpoint(checkpoint):
    if isinstance(checkpoint, (str, bytes)):
        if isinstance(checkpoint, bytes):
            return net.load_checkpoint(checkpoint)
        return net.load_checkpoint_file(checkpoint)
    return checkpoint  # (spec, weights, meta)


def run_episode(checkpoint, track: TrackSpec, zeta: float, n_laps: int = 3,
                deterministic: bool = True, seed: int = 0, mode: str | None = None,
                record_trajectory: bool = True, reward_params: RewardParams | None = None,
                lap_timeout: float | None = None, _env=None, _policy_fn=None) -> EpisodeResult:
    """Fly from a canonical start at the start gate until n_laps flying laps.

    The lap timer starts at the first start-gate pass; each laptime is the
    time between consecutive completions of the full gate sequence.
    _env/_policy_fn are test seams (scripted flights, kinematic stubs).
    """
    spec, weights, meta = _load_checkpoint(checkpoint)
    cond = conditioning_from_meta(meta)
    if mode is not None and mode != cond.mode:
        raise IncompatibleConditioning(f"checkpoint mode {cond.mode!r}, requested {mode!r}")
    if _env is None:
        quad = quad_params_from_meta(meta)
        base_cfg = env_config_from_meta(meta)
        per_lap = lap_timeout if lap_timeout is not None else base_cfg.timeout
        cfg = env_config_from_meta(meta, timeout=per_lap * (n_laps + 2))
        env = RaceEnv(quad, track, cond, reward_params=reward_params, cfg=cfg, seed=seed)
    else:
        env = _env
        quad = env.quad_params
        cfg = env.cfg

    obs = env.reset(zeta=zeta, gate_index=track.start_gate_index, canonical=True)
    start_passes: list[float] = []
    laptimes: list[float] = []
    rows_t, rows_p, rows_q, rows_v, rows_z, rows_g, rows_c = [], [], [], [], [], [], []
    speeds = []
    violations = 0
    steps = 0
    crashed = False
    c_twr = thrust_limit(zeta, cond.mode, quad)

    done = False
    while not done and len(laptimes) < n_laps:
        if _policy_fn is not None:
            action = _policy_fn(obs, env)
        else:
            dist = net.policy_forward(spec, weights, obs.core_vector(cfg), obs.zeta_enc)
            action = dist.mean if deterministic else dist.sample(env.rng)
        obs, _reward, done, info = env.step(action)
        steps += 1
        speed = float(np.linalg.norm(env.state.quad.v))
        speeds.append(speed)
        if info["c_cmd"] > c_twr:
            violations += 1
        if record_trajectory:
            rows_t.append(env.state.t)
            rows_p.append(env.state.quad.p.copy())
            rows_q.append(env.state.quad.q.copy())
            rows_v.append(env.state.quad.v.copy())
            rows_z.append(env.state.zeta)
            rows_g.append(env.state.next_gate)
            rows_c.append(info["c_cmd"])
        for g, t_pass in zip(info["gates_passed"], info["pass_times"]):
            if g == track.start_gate_index:
                if start_passes:
                    laptimes.append(t_pass - start_passes[-1])
                start_passes.append(t_pass)
        if info["crash"]:
            crashed = True

    trajectory = None
    if record_trajectory and rows_t:
        trajectory = Trajectory(t=np.array(rows_t), p=np.stack(rows_p), q=np.stack(rows_q),
                                v=np.stack(rows_v), zeta=np.array(rows_z),
                                gate_idx=np.array(rows_g), c_cmd=np.array(rows_c))
    perc = perception_error(trajectory, track,
                            zeta if cond.mode == "view" else 0.0) if trajectory else float("nan")
    return EpisodeResult(
        laptimes=laptimes, crashed=crashed,
        mean_speed=float(np.mean(speeds)) if speeds else 0.0,
        max_speed=float(np.max(speeds)) if speeds else 0.0,
        perc_error_deg=perc,
        twr_violation_frac=violations / steps if steps else 0.0,
        trajectory=trajectory)


def sweep_conditioning(checkpoint, track: TrackSpec, grid=None, episodes: int = 3,
                       n_laps: int = 2, deterministic: bool = False, seed: int = 0,
                       mode: str | None = None) -> SweepTable:
    """Best laptime per grid point over `episodes` runs; crashes mark the point failed."""
    grid = PAPER_GRID if grid is None else np.asarray(grid, dtype=np.float64)
    laptimes = np.full(len(grid), np.nan)
    success = np.zeros(len(grid), dtype=bool)
    for i, zeta in enumerate(grid):
        best = np.inf
        for k in range(episodes):
            res = run_episode(checkpoint, track, float(zeta), n_laps=n_laps,
                              deterministic=deterministic, seed=seed * 1000 + k, mode=mode,
                              record_trajectory=False)
            if res.laptimes:
                best = min(best, min(res.laptimes))
        if np.isfinite(best):
            laptimes[i] = best
            success[i] = True
    return SweepTable(zeta=grid, laptime=laptimes, success=success)


def relative_laptime(sweep: SweepTable, reference: SweepTable) -> RelStats:
    """Per-point (lap - ref) / ref over grid points completed by both, in percent."""
    rels = []
    for i, z in enumerate(sweep.zeta):
        j = np.where(np.isclose(reference.zeta, z, atol=1e-9))[0]
        if len(j) == 0:
            continue
        j = int(j[0])
        if sweep.success[i] and reference.success[j]:
            rels.append((sweep.laptime[i] - reference.laptime[j]) / reference.laptime[j])
    if not rels:
        raise NoOverlap("no grid point completed by both policies")
    rels = np.array(rels)
    return RelStats(avg_rel_pct=float(rels.mean() * 100.0),
                    max_rel_pct=float(rels.max() * 100.0), n_points=len(rels))


def perception_error(trajectory: Trajectory, track: TrackSpec, view_offset: float = 0.0,
                     camera_pitch: float = 0.0) -> float:
    """Mean angle (deg) between the camera axis and the offset target direction."""
    if trajectory is None or len(trajectory) == 0:
        raise ValueError("trajectory must be non-empty")
    errs = np.empty(len(trajectory))
    for i in range(len(trajectory)):
        center = track.gates[int(trajectory.gate_idx[i])].center
        errs[i] = camera_error(trajectory.q[i], trajectory.p[i], center, view_offset, camera_pitch)
    return float(np.degrees(errs.mean()))


# ---------------------------------------------------------------- reference data

def _refdata(name: str) -> dict:
    path = resources.files("condor").joinpath(f"refdata/{name}")
    return json.loads(path.read_text(encoding="utf-8"))


def reference_sim_sweeps() -> dict[str, SweepTable]:
    """Published Split-S simulation sweeps keyed by architecture (plus 'fixed')."""
    raw = _refdata("splits_sim_twr_sweep.json")
    out = {}
    for arch, pts in raw["curves"].items():
        pts = np.asarray(pts, dtype=np.float64)
        out[arch] = SweepTable(zeta=pts[:, 0], laptime=pts[:, 1],
                               success=np.ones(len(pts), dtype=bool))
    return out


def reference_real_sweeps() -> dict[str, SweepTable]:
    raw = _refdata("splits_real_twr_sweep.json")
    out = {}
    for arch, pts in raw["curves"].items():
        pts = np.asarray(pts, dtype=np.float64)
        out[arch] = SweepTable(zeta=pts[:, 0], laptime=pts[:, 1],
                               success=np.ones(len(pts), dtype=bool))
    return out


def reference_track_laptimes() -> dict:
    return _refdata("real_track_laptimes.json")


def reference_view_offset_errors() -> dict:
    return _refdata("splits_view_offset_errors.json")


# ---------------------------------------------------------------------- exports

def export_sweep(table: SweepTable, fmt: str = "csv") -> str:
    if fmt == "json":
        rows = [{"zeta": float(z), "laptime_s": (None if not s else float(l)), "success": bool(s)}
                for z, l, s in zip(table.zeta, table.laptime, table.success)]
        return json.dumps({"rows": rows}, indent=2)
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["zeta", "laptime_s", "success"])
    for z, l, s in zip(table.zeta, table.laptime, table.success):
        w.writerow([repr(float(z)), "" if not s else repr(float(l)), int(s)])
    return buf.getvalue()


def import_sweep(text: str, fmt: str = "csv") -> SweepTable:
    if fmt == "json":
        rows = json.loads(text)["rows"]
        return SweepTable(zeta=[r["zeta"] for r in rows],
                          laptime=[np.nan if r["laptime_s"] is None else r["laptime_s"]
                                   for r in rows],
                          success=[r["success"] for r in rows])
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["zeta", "laptime_s", "success"]
    zeta, lap, suc = [], [], []
    for r in rows[1:]:
        zeta.append(float(r[0]))
        lap.append(float(r[1]) if r[1] else np.nan)
        suc.append(bool(int(r[2])))
    return SweepTable(zeta=zeta, laptime=lap, success=suc)


def export_relative(stats: dict[str, RelStats], fmt: str = "csv") -> str:
    if fmt == "json":
        rows = [{"arch": a, "avg_rel_pct": s.avg_rel_pct, "max_rel_pct": s.max_rel_pct}
                for a, s in stats.items()]
        return json.dumps({"rows": rows}, indent=2)
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["arch", "avg_rel_pct", "max_rel_pct"])
    for a, s in stats.items():
        w.writerow([a, repr(s.avg_rel_pct), repr(s.max_rel_pct)])
    return buf.getvalue()


def export_perception(rows: list[tuple[float, float]], fmt: str = "csv") -> str:
    if fmt == "json":
        return json.dumps({"rows": [{"offset_deg": o, "mean_err_deg": e} for o, e in rows]},
                          indent=2)
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["offset_deg", "mean_err_deg"])
    for o, e in rows:
        w.writerow([repr(float(o)), repr(float(e))])
    return buf.getvalue()


def export_results(obj, fmt: str = "csv") -> str:
    """Dispatch on result type; formats 'csv' and 'json'."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    if isinstance(obj, SweepTable):
        return export_sweep(obj, fmt)
    if isinstance(obj, dict) and all(isinstance(v, RelStats) for v in obj.values()):
        return export_relative(obj, fmt)
    if isinstance(obj, list):
        return export_perception(obj, fmt)
    raise TypeError(f"cannot export {type(obj)!r}")

"""Command-line entry point: train, eval, sweep, simulate, serve."""

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import evaluation, flight, net, ppo, track as track_mod
from .conditioning import ConditioningSpec
from .dynamics import QuadParams, ResidualCoeffs, _default_rotor_positions
from .env import CORE_OBS_DIM, EnvConfig, RaceEnv, RewardParams
from .net import PolicySpec
from .ppo import PpoConfig


class ConfigError(ValueError):
    """Configuration problem, message prefixed with the offending key path."""

    def __init__(self, path: str, problem: str):
        self.path = path
        super().__init__(f"{path}: {problem}")


def _check_keys(obj: dict, allowed, path: str) -> None:
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown key")


def _build(cls, raw: dict, path: str, required=()):
    names = [f.name for f in fields(cls)]
    _check_keys(raw, names, path)
    for key in required:
        if key not in raw:
            raise ConfigError(f"{path}.{key}", "required key missing")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(path, str(e)) from e


def quad_params_from_dict(raw: dict, path: str = "quad") -> QuadParams:
    raw = dict(raw)
    allowed = {"m", "inertia", "k_mot", "omega_max", "f_max", "c_l", "c_d", "arm_length",
               "rotor_positions", "rotor_spin_dirs", "residual"}
    _check_keys(raw, allowed, path)
    if "m" not in raw:
        raise ConfigError(f"{path}.m", "required key missing")
    arm = raw.pop("arm_length", None)
    if arm is not None and "rotor_positions" not in raw:
        raw["rotor_positions"] = _default_rotor_positions(float(arm))
    if "f_max" in raw and "omega_max" in raw and "c_l" not in raw:
        raw["c_l"] = float(raw["f_max"]) / (4.0 * float(raw["omega_max"]) ** 2)
    if "c_l" in raw and "c_d" not in raw:
        raw["c_d"] = 0.01 * float(raw["c_l"])
    res = raw.pop("residual", None)
    if res is not None:
        _check_keys(res, {"A_lin", "A_quad", "B_lin"}, f"{path}.residual")
        raw["residual"] = ResidualCoeffs(
            A_lin=np.array(res.get("A_lin", np.zeros((3, 3))), dtype=np.float64),
            A_quad=np.array(res.get("A_quad", np.zeros((3, 3))), dtype=np.float64),
            B_lin=np.array(res.get("B_lin", np.zeros((3, 3))), dtype=np.float64))
    for key in ("inertia", "rotor_positions", "rotor_spin_dirs"):
        if key in raw:
            raw[key] = np.array(raw[key], dtype=np.float64)
    try:
        return QuadParams(**raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(path, str(e)) from e


def quad_params_to_dict(q: QuadParams) -> dict:
    return {
        "m": q.m, "inertia": list(q.inertia), "k_mot": q.k_mot, "omega_max": q.omega_max,
        "f_max": q.f_max, "c_l": q.c_l, "c_d": q.c_d,
        "rotor_positions": [list(r) for r in q.rotor_positions],
        "rotor_spin_dirs": list(q.rotor_spin_dirs),
        "residual": {"A_lin": [list(r) for r in np.asarray(q.residual.A_lin)],
                     "A_quad": [list(r) for r in np.asarray(q.residual.A_quad)],
                     "B_lin": [list(r) for r in np.asarray(q.residual.B_lin)]},
    }


@dataclass
class RunConfig:
    track_path: str
    out_dir: str
    quad: QuadParams
    reward: RewardParams
    cond: ConditioningSpec
    policy: PolicySpec
    ppo: PpoConfig
    env: EnvConfig
    seeds: list

    def effective_dict(self) -> dict:
        env = asdict(self.env)
        if np.isnan(env["action_thrust_bias"]):
            env["action_thrust_bias"] = None  # JSON-friendly hover-centered marker
        return {
            "track": self.track_path,
            "out_dir": self.out_dir,
            "seeds": list(self.seeds),
            "quad": quad_params_to_dict(self.quad),
            "reward": asdict(self.reward),
            "conditioning": asdict(self.cond),
            "policy": {"arch": self.policy.arch, "hidden": self.policy.hidden,
                       "n_layers": self.policy.n_layers,
                       "film_generator_hidden": self.policy.film_generator_hidden,
                       "value_hidden": self.policy.value_hidden},
            "ppo": asdict(self.ppo),
            "env": env,
        }

    def checkpoint_meta(self) -> dict:
        return {"cond": asdict(self.cond), "env": asdict(self.env),
                "quad": quad_params_to_dict(self.quad),
                "track": self.track_path, "obs_dim": CORE_OBS_DIM}


TOP_KEYS = {"track", "out_dir", "seeds", "quad", "reward", "conditioning", "policy",
            "ppo", "env"}
POLICY_KEYS = {"arch", "hidden", "n_layers", "film_generator_hidden", "value_hidden"}


def parse_config(source: str) -> RunConfig:
    """Parse and validate a JSON run configuration (path or literal text)."""
    if os.path.exists(source):
        with open(source, "r", encoding="utf-8") as f:
            text = f.read()
    else:
        text = source
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("<file>", f"invalid JSON: {e.msg} (line {e.lineno})") from e
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    _check_keys(raw, TOP_KEYS, "")
    if "track" not in raw:
        raise ConfigError("track", "required key missing")
    if "quad" not in raw:
        raise ConfigError("quad", "required key missing")

    quad = quad_params_from_dict(raw["quad"])
    reward = _build(RewardParams, raw.get("reward", {}), "reward")
    cond = _build(ConditioningSpec, raw.get("conditioning", {}), "conditioning")
    env_raw = dict(raw.get("env", {}))
    if env_raw.get("action_thrust_bias", float("nan")) is None:
        env_raw["action_thrust_bias"] = float("nan")  # null = hover-centered default
    env_cfg = _build(EnvConfig, env_raw, "env")
    ppo_cfg = _build(PpoConfig, raw.get("ppo", {}), "ppo")

    pol = dict(raw.get("policy", {}))
    _check_keys(pol, POLICY_KEYS, "policy")
    arch = pol.pop("arch", "film_star_c")
    try:
        policy = PolicySpec(arch=arch, obs_dim=CORE_OBS_DIM, cond_dim=cond.dim,
                            cond_encoding=cond.encoding,
                            n_heads=cond.dim if arch == "multihead" else 0, **pol)
    except ValueError as e:
        raise ConfigError("policy", str(e)) from e

    track_path = raw["track"]
    if not os.path.exists(track_path):
        raise ConfigError("track", f"file not found: {track_path}")
    return RunConfig(track_path=track_path, out_dir=raw.get("out_dir", "runs/run"),
                     quad=quad, reward=reward, cond=cond, policy=policy, ppo=ppo_cfg,
                     env=env_cfg, seeds=list(raw.get("seeds", [ppo_cfg.seed])))


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """--set dotted.key=value, JSON-literal values with plain-string fallback."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must be key=value")
        key, value = item.split("=", 1)
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            pass
        node = raw
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(key, "override path crosses a non-object")
        node[parts[-1]] = value
    return raw


def make_env_factory(cfg: RunConfig, track: track_mod.TrackSpec):
    def make_env(seed: int) -> RaceEnv:
        return RaceEnv(cfg.quad, track, cfg.cond, reward_params=cfg.reward,
                       cfg=cfg.env, seed=seed)
    return make_env


# ------------------------------------------------------------------- commands

def _echo_config(cfg: RunConfig) -> None:
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "config.json"), "w", encoding="utf-8") as f:
        json.dump(cfg.effective_dict(), f, indent=2, sort_keys=True)


def cmd_train(args) -> int:
    with open(args.config, "r", encoding="utf-8") as f:
        raw = json.load(f)
    raw = apply_overrides(raw, args.set or [])
    cfg = config_from_dict(raw)
    trk = track_mod.load_track_file(cfg.track_path)
    _echo_config(cfg)
    make_env = make_env_factory(cfg, trk)
    meta = cfg.checkpoint_meta()

    seeds = cfg.seeds if args.seeds is None else [cfg.ppo.seed + i for i in range(args.seeds)]
    if len(seeds) == 1:
        run_cfg = PpoConfig(**{**asdict(cfg.ppo), "seed": int(seeds[0])})
        res = ppo.train(make_env, cfg.policy, run_cfg, cfg.out_dir, meta=meta,
                        log_wall_time=not args.deterministic_log, workers=args.workers)
        print(f"checkpoint: {res.checkpoint_path}")
        print(f"metrics:    {res.metrics_path}")
        return 0

    def score(ckpt_path: str) -> float:
        table = evaluation.sweep_conditioning(ckpt_path, trk, grid=[2.5, 3.5, 4.5],
                                              episodes=1, n_laps=1, deterministic=True)
        if not table.success.any():
            return float("inf")
        return float(np.nanmean(table.laptime))

    best, results = ppo.train_multi_seed(make_env, cfg.policy, cfg.ppo, seeds, cfg.out_dir,
                                         score, meta=meta,
                                         log_wall_time=not args.deterministic_log,
                                         workers=args.workers)
    with open(os.path.join(cfg.out_dir, "best.txt"), "w") as f:
        f.write(best + "\n")
    for seed, path, s in results:
        print(f"seed {seed}: score {s:.3f} ({path})")
    print(f"best checkpoint: {best}")
    return 0


def cmd_eval(args) -> int:
    trk = track_mod.load_track_file(args.track)
    res = evaluation.run_episode(args.checkpoint, trk, args.zeta, n_laps=args.laps,
                                 deterministic=args.deterministic, seed=args.seed)
    out = {"laptimes": res.laptimes, "crashed": res.crashed, "mean_speed": res.mean_speed,
           "max_speed": res.max_speed, "perc_error_deg": res.perc_error_deg,
           "twr_violation_frac": res.twr_violation_frac}
    text = json.dumps(out, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text + "\n")
    print(text)
    return 0


def _parse_grid(spec: str) -> np.ndarray:
    a, b, n = spec.split(":")
    return np.linspace(float(a), float(b), int(n))


def _sweep_source(source: str, trk, grid, episodes, laps) -> evaluation.SweepTable:
    if source.startswith("fixture:"):
        name = source.split(":", 1)[1]
        sweeps = evaluation.reference_sim_sweeps()
        if name not in sweeps:
            raise ConfigError(source, f"unknown fixture (have {sorted(sweeps)})")
        return sweeps[name]
    if source.endswith(".csv"):
        with open(source, "r", encoding="utf-8") as f:
            return evaluation.import_sweep(f.read())
    return evaluation.sweep_conditioning(source, trk, grid=grid, episodes=episodes,
                                         n_laps=laps)


def cmd_sweep(args) -> int:
    trk = track_mod.load_track_file(args.track) if args.track else None
    grid = _parse_grid(args.grid) if args.grid else None
    table = _sweep_source(args.checkpoint, trk, grid, args.episodes, args.laps)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "sweep.csv"), "w", encoding="utf-8") as f:
        f.write(evaluation.export_sweep(table))
    if args.reference:
        ref = _sweep_source(args.reference, trk, grid, args.episodes, args.laps)
        rel = evaluation.relative_laptime(table, ref)
        with open(os.path.join(args.out, "rel_stats.csv"), "w", encoding="utf-8") as f:
            f.write(evaluation.export_relative({args.label: rel}))
        print(f"avg {rel.avg_rel_pct:.2f}% max {rel.max_rel_pct:.2f}% "
              f"over {rel.n_points} points")
    print(f"wrote {os.path.join(args.out, 'sweep.csv')}")
    return 0


def cmd_simulate(args) -> int:
    trk = track_mod.load_track_file(args.track)
    schedule = None
    if args.zeta_schedule:
        with open(args.zeta_schedule, "r", encoding="utf-8") as f:
            schedule = [(float(t), float(v)) for t, v in json.load(f)]
    rows = flight.simulate_trajectory(args.checkpoint, trk, args.zeta, args.duration,
                                      schedule=schedule, stochastic=args.stochastic,
                                      seed=args.seed)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(flight.trajectory_csv(rows))
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


def cmd_serve(args) -> int:
    from .server import LiveServer, run_server
    trk = track_mod.load_track_file(args.track)
    schedule = None
    if args.zeta_schedule:
        with open(args.zeta_schedule, "r", encoding="utf-8") as f:
            schedule = [(float(t), float(v)) for t, v in json.load(f)]
    server = LiveServer(net.load_checkpoint_file(args.checkpoint), trk,
                        time_scale=args.time_scale, stochastic=args.stochastic,
                        zeta_schedule=schedule)
    run_server(server, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="condor",
                                description="conditioned quadrotor racing toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a policy from a run config")
    t.add_argument("--config", required=True)
    t.add_argument("--seeds", type=int, default=None,
                   help="train N seeds and keep the best by evaluated laptime")
    t.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config entry (dotted path)")
    t.add_argument("--workers", type=int, default=None)
    t.add_argument("--deterministic-log", action="store_true",
                   help="write wall_time as 0.0 for bitwise-reproducible logs")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="fly laps with a checkpoint at one conditioning value")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--track", required=True)
    e.add_argument("--zeta", type=float, required=True)
    e.add_argument("--laps", type=int, default=3)
    e.add_argument("--deterministic", action="store_true")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="laptime sweep over the conditioning grid")
    s.add_argument("--checkpoint", required=True,
                   help="checkpoint path, sweep CSV, or fixture:<name>")
    s.add_argument("--track")
    s.add_argument("--grid", help="a:b:n linspace")
    s.add_argument("--reference", help="reference checkpoint/CSV/fixture for rel_stats.csv")
    s.add_argument("--episodes", type=int, default=3)
    s.add_argument("--laps", type=int, default=2)
    s.add_argument("--label", default="policy")
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("simulate", help="offline mean-action trajectory to CSV")
    m.add_argument("--checkpoint", required=True)
    m.add_argument("--track", required=True)
    m.add_argument("--zeta", type=float, required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--duration", type=float, default=10.0)
    m.add_argument("--zeta-schedule", help="JSON [[t, value], ...] applied at sim times")
    m.add_argument("--stochastic", action="store_true")
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=cmd_simulate)

    v = sub.add_parser("serve", help="live cockpit server")
    v.add_argument("--checkpoint", required=True)
    v.add_argument("--track", required=True)
    v.add_argument("--port", type=int, default=8700)
    v.add_argument("--time-scale", type=float, default=1.0)
    v.add_argument("--stochastic", action="store_true")
    v.add_argument("--zeta-schedule")
    v.set_defaults(func=cmd_serve)
    return p


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure contract: exit code 2
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

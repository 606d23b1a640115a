"""Config-driven experiment runner: validate, run, report.

Configs are flat INI files with sections mirroring the module names.  Runs
write deterministic CSV/JSON artifacts plus a RunManifest; exit status
encodes the aggregate outcome (0 pass, 1 check failure, 2 configuration
error, 3 runtime/IO error).  Path batches persist per-batch summary files,
so an interrupted run resumes from the last complete batch.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import io
import json
import sys
import time
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

import numpy as np

from . import density, experiments, green, malliavin, seminorm
from .field import DIRICHLET, NEUMANN

EXPERIMENTS = (
    "Identities",
    "Regularity",
    "GrrCheck",
    "DensityF",
    "DensityM0",
    "Tails",
    "WalshScaling",
    "Gamma22Moments",
)


class ConfigError(Exception):
    pass


@dataclass
class ExperimentConfig:
    bc: str = DIRICHLET
    t_max: float = 1.0
    nt: int = 256
    nx: int = 128
    i_lo: float = 0.2
    i_hi: float = 0.8
    j_lo: float = 0.3
    j_hi: float = 0.5
    c1: float = 0.1
    big_c1: float = 0.9
    c2: float = 0.05
    big_c2: float = 0.97
    s0: float = 0.4
    y0: float = 0.45
    delta1: float = 0.02
    delta2: float = 0.0
    p0: int = 7
    gamma0: float = 4.5
    theta: float = 0.25
    gamma1: float = 0.0
    gamma2: float = 0.0
    n_paths: int = 10**4
    seed: int = 0
    batch_size: int = 1000
    experiment: str = "Identities"
    output_dir: str = "out"

    _SECTIONS = {
        "model": ("bc", "t_max"),
        "grid": ("nt", "nx"),
        "window": (
            "i_lo", "i_hi", "j_lo", "j_hi", "c1", "big_c1", "c2", "big_c2",
            "s0", "y0", "delta1", "delta2",
        ),
        "seminorm": ("p0", "gamma0", "theta", "gamma1", "gamma2"),
        "mc": ("n_paths", "seed", "batch_size"),
        "run": ("experiment", "output_dir"),
    }

    def serialize(self) -> str:
        out = []
        for section, keys in self._SECTIONS.items():
            out.append(f"[{section}]")
            for k in keys:
                out.append(f"{k} = {getattr(self, k)}")
            out.append("")
        return "\n".join(out)

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text)
        except configparser.Error as e:
            raise ConfigError(f"unparseable config: {e}") from e
        types = {f.name: f.type for f in dc_fields(cls)}
        kwargs = {}
        known = {k for keys in cls._SECTIONS.values() for k in keys}
        for section in cp.sections():
            for k, v in cp.items(section):
                if k not in known:
                    raise ConfigError(f"unknown config key [{section}] {k}")
                t = types[k]
                try:
                    kwargs[k] = int(v) if t == "int" else float(v) if t == "float" else v
                except ValueError as e:
                    raise ConfigError(f"bad value for {k}: {v!r}") from e
        return cls(**kwargs)

    def config_hash(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()[:16]

    def seminorm_params(self) -> seminorm.SeminormParams:
        if self.gamma1 > 0.0 or self.gamma2 > 0.0:
            return seminorm.SeminormParams(
                self.p0, self.gamma0, self.theta, self.gamma1, self.gamma2
            )
        return seminorm.SeminormParams(self.p0, self.gamma0)


def constraint_checks(cfg: ExperimentConfig) -> list[dict]:
    """Every geometric and parameter constraint with its numeric margin."""
    delta = np.sqrt(cfg.delta1) + cfg.delta2
    j_gap = min(cfg.j_lo - cfg.c2, (cfg.big_c2 - cfg.j_hi) / 2.0)
    checks = [
        ("bc in {dirichlet, neumann}", 1.0 if cfg.bc in (DIRICHLET, NEUMANN) else -1.0),
        ("0 < c1 < I_lo", min(cfg.c1, cfg.i_lo - cfg.c1)),
        ("I_hi < C1 < T", min(cfg.big_c1 - cfg.i_hi, cfg.t_max - cfg.big_c1)),
        ("0 < c2 < J_lo", min(cfg.c2, cfg.j_lo - cfg.c2)),
        ("J_hi < C2 < 1", min(cfg.big_c2 - cfg.j_hi, 1.0 - cfg.big_c2)),
        ("s0 in I", min(cfg.s0 - cfg.i_lo, cfg.i_hi - cfg.s0)),
        ("s0 + delta1 in I", cfg.i_hi - (cfg.s0 + cfg.delta1)),
        ("y0 in J", min(cfg.y0 - cfg.j_lo, cfg.j_hi - cfg.y0)),
        ("delta1^{1/2} < min{J_lo - c2, (C2 - J_hi)/2}", j_gap - np.sqrt(cfg.delta1)),
        ("p0 - 2 > gamma0", cfg.p0 - 2.0 - cfg.gamma0),
        ("gamma0 > 4", cfg.gamma0 - 4.0),
        ("0 < theta <= 1/4", min(cfg.theta, 0.25 - cfg.theta + 1e-15)),
    ]
    if cfg.delta2 > 0.0:
        checks += [
            ("y0 + delta2 in J", cfg.j_hi - (cfg.y0 + cfg.delta2)),
            ("(delta1^{1/2} + delta2)^2 < C1", cfg.big_c1 - delta**2),
            ("delta1^{1/2} + delta2 < min{J_lo - c2, (C2 - J_hi)/2}", j_gap - delta),
        ]
    if cfg.gamma1 > 0.0 or cfg.gamma2 > 0.0:
        lo = 1.0 / (2.0 * cfg.p0)
        checks += [
            ("gamma1 in ]1/(2p0), theta/2 - 1/(2p0)[",
             min(cfg.gamma1 - lo, cfg.theta / 2.0 - lo - cfg.gamma1)),
            ("gamma2 in ]1/(2p0), theta/2 - 1/(2p0)[",
             min(cfg.gamma2 - lo, cfg.theta / 2.0 - lo - cfg.gamma2)),
            ("2 gamma1 + gamma2 = (gamma0 - 1)/(2 p0)",
             1e-12 - abs(2.0 * cfg.gamma1 + cfg.gamma2 - (cfg.gamma0 - 1.0) / (2.0 * cfg.p0))),
        ]
    return [
        {"constraint": name, "margin": float(m), "ok": bool(m > 0.0)}
        for name, m in checks
    ]


def _json_write(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=float) + "\n")


def _sha(arrays: dict) -> str:
    h = hashlib.sha256()
    for k in sorted(arrays):
        h.update(k.encode())
        h.update(np.ascontiguousarray(arrays[k]).tobytes())
    return h.hexdigest()[:16]


def _batched_samples(cfg: ExperimentConfig, kind: str, delta1: float, out: Path, resume: bool):
    """Sample window statistics in persisted batches of cfg.batch_size."""
    ckdir = out / "checkpoints" / f"{kind}-{delta1:g}"
    ckdir.mkdir(parents=True, exist_ok=True)
    n_batches = -(-cfg.n_paths // cfg.batch_size)
    parts, checksums = [], []
    for i in range(n_batches):
        b = min(cfg.batch_size, cfg.n_paths - i * cfg.batch_size)
        f = ckdir / f"batch_{i:05d}.npz"
        if resume and f.exists():
            data = dict(np.load(f))
        else:
            if kind == "F":
                res = experiments.sample_F_batch(
                    delta1, b, cfg.seed, cfg.s0, cfg.y0, cfg.bc
                )
                data = {"f1": res["f1"], "f2": res["f2"]}
            else:
                d2 = experiments.m0_delta2(delta1)
                res = experiments.sample_M0_batch(
                    delta1, d2, b, cfg.seed, cfg.y0, cfg.bc
                )
                data = {"m0": res["m0"]}
            np.savez(f, **data)
        parts.append(data)
        checksums.append(_sha(data))
    merged = {
        k: np.concatenate([p[k] for p in parts]) for k in parts[0]
    }
    return merged, checksums


def _run_identities(cfg, out) -> tuple[bool, dict]:
    bc = cfg.bc
    res = {}
    g_e = green.evaluate_green(0.02, 0.3, 0.6, bc, green.KernelParams(method="eigen"))
    g_i = green.evaluate_green(0.02, 0.3, 0.6, bc, green.KernelParams(method="image"))
    res["green_cross_method"] = abs(float(g_e) - float(g_i))
    a1 = green.heat_identity_A(
        0.3, 0.25, lambda r: r, lambda r: 1.0,
        lambda v: np.cos(np.pi * v), lambda v: -np.pi**2 * np.cos(np.pi * v),
        NEUMANN,
    )
    res["heat_identity_neumann"] = abs(a1 - 0.3 * np.cos(np.pi * 0.25))
    a2 = green.heat_identity_A(
        0.5, 0.5, lambda r: -np.expm1(-r), lambda r: np.exp(-r),
        lambda v: np.sin(np.pi * v), lambda v: -np.pi**2 * np.sin(np.pi * v),
        DIRICHLET,
    )
    res["heat_identity_dirichlet"] = abs(a2 - float(-np.expm1(-0.5)))
    f0 = malliavin.f0_bump(cfg.c1, cfg.big_c1, cfg.t_max)
    g0 = malliavin.g0_bump(cfg.c2, cfg.big_c2)
    res["pair_DF1_uA1"] = abs(
        malliavin.pair_DF1_uA1(cfg.s0, cfg.y0, f0, g0, bc) - 1.0
    )
    res["pair_DF1_uA2"] = abs(malliavin.pair_DF1_uA2(cfg.s0, cfg.s0 + 1e-3))
    res["pair_increment_uA1"] = abs(
        malliavin.pair_increment_uA1(
            cfg.s0 + cfg.delta1, cfg.s0 + cfg.delta1 / 2.0, cfg.y0, f0, g0, bc
        )
    )
    times = cfg.s0 + np.linspace(0.0, cfg.delta1, 32)
    trace = 1e-2 * np.linspace(0.0, 1.0, 32) ** 2
    res["pair_DY_uA1"] = abs(
        malliavin.pair_DY_uA1(trace, times, cfg.seminorm_params(), f0, g0.value(cfg.y0))
    )
    ok = all(v < 1e-5 for v in res.values())
    _json_write(out / "identities.json", {"residuals": res, "passed": ok})
    return ok, {"residuals": res}


def _run_density_f(cfg, out, resume) -> tuple[bool, dict]:
    if cfg.n_paths < 10**5:
        raise ConfigError(
            f"DensityF needs n_paths >= 1e5 for the bound verdicts, got {cfg.n_paths}"
        )
    estimates, f2_samples, checksums = {}, {}, {}
    for d1 in experiments.F_DELTAS:
        merged, sums = _batched_samples(cfg, "F", d1, out, resume)
        checksums[str(d1)] = sums
        f2_samples[d1] = merged["f2"]
        est = density.kde(np.column_stack([merged["f1"], merged["f2"]]), bw_scale=0.5)
        est.to_csv(out / f"density_F_{d1:g}.csv")
        estimates[d1] = est
    rep = density.verify_density_bound_F(estimates)
    rep.to_json(out / "bound_F.json")
    rep_ref = density.verify_density_bound_F(estimates, refined=True)
    rep_ref.to_json(out / "bound_F_refined.json")
    slope, se = density.mean_sup_scaling(
        list(experiments.F_DELTAS), [f2_samples[d] for d in experiments.F_DELTAS]
    )
    collapse_ok = rep.collapse_distance <= 0.1 * rep.collapse_peak
    ok = rep.passed and rep_ref.passed and collapse_ok and abs(slope - 0.25) <= 0.03
    summary = {
        "mean_slope": slope,
        "mean_slope_stderr": se,
        "collapse_ok": collapse_ok,
        "bound_passed": rep.passed,
        "refined_passed": rep_ref.passed,
        "checksums": checksums,
    }
    _json_write(out / "density_F_summary.json", summary | {"passed": ok})
    return ok, summary


def _run_density_m0(cfg, out, resume) -> tuple[bool, dict]:
    if cfg.n_paths < 10**5:
        raise ConfigError(
            f"DensityM0 needs n_paths >= 1e5 for the bound verdicts, got {cfg.n_paths}"
        )
    estimates, samples, checksums = {}, {}, {}
    for d1 in experiments.M0_DELTA1S:
        delta = experiments.combined_delta(d1, experiments.m0_delta2(d1))
        merged, sums = _batched_samples(cfg, "M0", d1, out, resume)
        checksums[str(d1)] = sums
        samples[delta] = merged["m0"]
        est = density.kde(merged["m0"], bw_scale=0.5)
        est.to_csv(out / f"density_M0_{d1:g}.csv")
        estimates[delta] = est
    rep = density.verify_density_bound_M0(estimates)
    rep.to_json(out / "bound_M0.json")
    deltas = sorted(samples)
    slope, se = density.mean_sup_scaling(deltas, [samples[d] for d in deltas])
    collapse_ok = rep.collapse_distance <= 0.1 * rep.collapse_peak
    ok = rep.passed and collapse_ok and abs(slope - 0.5) <= 0.05
    summary = {
        "mean_slope": slope,
        "mean_slope_stderr": se,
        "collapse_ok": collapse_ok,
        "bound_passed": rep.passed,
        "checksums": checksums,
    }
    _json_write(out / "density_M0_summary.json", summary | {"passed": ok})
    return ok, summary


def _run_tails(cfg, out, resume) -> tuple[bool, dict]:
    f2 = {}
    for d1 in experiments.F_DELTAS:
        merged, _ = _batched_samples(cfg, "F", d1, out, resume)
        f2[d1] = merged["f2"]
    rep_f = density.verify_tail_bound(f2, scale_of=lambda d: np.sqrt(d))
    rep_f.to_json(out / "tail_F.json")
    m0 = {}
    for d1 in experiments.M0_DELTA1S:
        merged, _ = _batched_samples(cfg, "M0", d1, out, resume)
        m0[experiments.combined_delta(d1, experiments.m0_delta2(d1))] = merged["m0"]
    rep_m = density.verify_tail_bound(m0, scale_of=lambda d: d)
    rep_m.theorem = "TailM0"
    rep_m.to_json(out / "tail_M0.json")
    ok = rep_f.passed and rep_m.passed
    return ok, {"tail_F_passed": rep_f.passed, "tail_M0_passed": rep_m.passed}


def _run_experiment(cfg: ExperimentConfig, out: Path, resume: bool) -> tuple[bool, dict]:
    if cfg.experiment == "Identities":
        return _run_identities(cfg, out)
    if cfg.experiment == "Regularity":
        res = experiments.run_regularity(cfg.n_paths, cfg.seed, cfg.bc, nt=cfg.nt, nx=cfg.nx)
        ok = abs(res["time_slope"] - 0.5) <= 0.05 and abs(res["space_slope"] - 1.0) <= 0.1
        _json_write(out / "regularity.json", res | {"passed": ok})
        return ok, res
    if cfg.experiment == "GrrCheck":
        rt = experiments.run_grr_time(cfg.n_paths, cfg.delta1, cfg.seed, cfg.s0, cfg.y0, cfg.bc)
        rr = experiments.run_grr_rectangle(cfg.n_paths, cfg.delta1, cfg.seed, cfg.y0, cfg.bc)
        ok = (
            rt["counts"]["FAIL"] == 0 and rr["counts"]["FAIL"] == 0
            and rt["consistent"] and rr["consistent"]
        )
        _json_write(out / "grr_check.json", {"time": rt, "rectangle": rr, "passed": ok})
        return ok, {"time": rt, "rectangle": rr}
    if cfg.experiment == "DensityF":
        return _run_density_f(cfg, out, resume)
    if cfg.experiment == "DensityM0":
        return _run_density_m0(cfg, out, resume)
    if cfg.experiment == "Tails":
        return _run_tails(cfg, out, resume)
    if cfg.experiment == "WalshScaling":
        res = experiments.run_walsh_scaling(cfg.n_paths, cfg.seed, bc=cfg.bc)
        ok = abs(res["slope"] - 0.75) <= 0.10
        _json_write(out / "walsh_scaling.json", res | {"passed": ok})
        return ok, res
    if cfg.experiment == "Gamma22Moments":
        res = experiments.run_gamma22_moments(cfg.n_paths, cfg.seed, s0=cfg.s0, y0=cfg.y0, bc=cfg.bc)
        ok = not res["diverged"] and res["spread"] < 3.0
        _json_write(out / "gamma22_moments.json", res | {"passed": ok})
        return ok, res
    raise ConfigError(f"unknown experiment {cfg.experiment!r}; choose from {EXPERIMENTS}")


def cmd_validate(cfg: ExperimentConfig) -> int:
    checks = constraint_checks(cfg)
    for c in checks:
        print(f"{'PASS' if c['ok'] else 'FAIL'}  {c['constraint']}  (margin {c['margin']:+.4g})")
    return 0 if all(c["ok"] for c in checks) else 2


def cmd_run(cfg: ExperimentConfig, resume: bool) -> int:
    bad = [c for c in constraint_checks(cfg) if not c["ok"]]
    if bad:
        for c in bad:
            print(f"config violates: {c['constraint']} (margin {c['margin']:+.4g})", file=sys.stderr)
        return 2
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    ok, summary = _run_experiment(cfg, out, resume)
    manifest = {
        "config_hash": cfg.config_hash(),
        "config": cfg.serialize(),
        "code_version": _code_version(),
        "seeds": [cfg.seed],
        "experiment": cfg.experiment,
        "wall_clock_s": time.time() - t0,
        "passed": ok,
    }
    _json_write(out / "manifest.json", manifest)
    print(f"{cfg.experiment}: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_report(cfg: ExperimentConfig) -> int:
    out = Path(cfg.output_dir)
    manifest = out / "manifest.json"
    if not manifest.exists():
        print(f"no manifest at {manifest}", file=sys.stderr)
        return 3
    data = json.loads(manifest.read_text())
    print(f"experiment: {data['experiment']}")
    print(f"config hash: {data['config_hash']}")
    print(f"outcome: {'PASS' if data['passed'] else 'FAIL'}")
    for f in sorted(out.glob("*.json")):
        if f.name != "manifest.json":
            print(f"artifact: {f}")
    for f in sorted(out.glob("*.csv")):
        print(f"artifact: {f}")
    return 0 if data["passed"] else 1


def _code_version() -> str:
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:
        return "unknown"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="heatsup", description=__doc__)
    ap.add_argument("command", choices=["validate", "run", "report"])
    ap.add_argument("--config", help="INI config file; defaults apply if omitted")
    ap.add_argument("--seed", type=int, help="override mc seed")
    ap.add_argument("--paths", type=int, help="override mc n_paths")
    ap.add_argument("--out", help="override output directory")
    ap.add_argument("--experiment", help="override experiment name")
    ap.add_argument("--resume", action="store_true", help="reuse existing batch checkpoints")
    args = ap.parse_args(argv)
    try:
        if args.config:
            cfg = ExperimentConfig.parse(Path(args.config).read_text())
        else:
            cfg = ExperimentConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.paths is not None:
            cfg.n_paths = args.paths
        if args.out is not None:
            cfg.output_dir = args.out
        if args.experiment is not None:
            cfg.experiment = args.experiment
        if args.command == "validate":
            return cmd_validate(cfg)
        if args.command == "run":
            return cmd_run(cfg, args.resume)
        return cmd_report(cfg)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

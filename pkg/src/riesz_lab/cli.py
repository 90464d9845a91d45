"""Command-line laboratory: one subcommand per experiment plus a selftest.

Exit codes: 0 on success (and all verdicts passing), 2 on a verdict
failure, 1 on configuration or integration errors (single-line
`error: ...` on stderr).  Every run writes `config.resolved.json` with all
effective settings; feeding that file back via --config reproduces the run.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import _accel
from .dynamics import (
    ConfigurationError,
    FlowParams,
    IntegrationError,
    Quadratic,
    coulomb_1d_centers,
    integrate_first_order,
    integrate_newtonian,
)
from .energy import VectorField, commutator_a1, commutator_bound_rhs, modulated_energy, write_energy_csv
from .experiments import (
    GronwallConfig,
    RateScanConfig,
    RatioScanConfig,
    SupercriticalConfig,
    commutator_ratio_scan,
    gronwall_track,
    rate_scan,
    supercritical_scan,
)
from .kernels import KernelDomainError, KernelSpec, Torus
from .measures import (
    InvalidConfigurationError,
    ParticleState,
    gridded_torus,
    sample_iid,
    torus_uniform,
    uniform_interval,
    write_particles_csv,
)
from .pde import InstabilityError, solve_mf_pde

USAGE_ERRORS = (
    ConfigurationError,
    IntegrationError,
    KernelDomainError,
    InvalidConfigurationError,
    InstabilityError,
    ValueError,
    KeyError,
    OSError,
)


def _parse_sizes(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    return tuple(int(tok) for tok in str(text).split(",") if tok.strip())


_COMMON = {
    "seed": 0,
    "out": ".",
    "threads": 0,
    "snap_every": 0,
}

_SCHEMAS: dict[str, dict] = {
    "simulate-first-order": {
        **_COMMON,
        "n": 64,
        "d": 1,
        "s": 0.5,
        "domain": "torus",
        "side": 1.0,
        "cutoff": 1024,
        "m": "-identity",
        "beta": math.inf,
        "dt": 1e-3,
        "steps": 100,
        "scheme": "",
        "external": "none",
        "external_coef": 2.0,
    },
    "simulate-newtonian": {
        **_COMMON,
        "n": 64,
        "eps": 0.05,
        "gamma": 0.0,
        "dt": 0.0,  # 0 -> eps/100
        "steps": 1000,
        "offset_factor": 0.25,
    },
    "energy": {
        **_COMMON,
        "n": 256,
        "d": 1,
        "s": 0.5,
        "domain": "torus",
        "side": 1.0,
        "cutoff": 4096,
    },
    "commutator-scan": {
        **_COMMON,
        "s": 0.5,
        "side": 1.0,
        "cutoff": 1024,
        "sizes": "256,512,1024,2048",
        "samples": 200,
        "variant": "sup_c",
    },
    "rate-scan": {
        **_COMMON,
        "scenario": "torus-lattice",
        "d": 1,
        "s": 0.5,
        "sizes": "32,64,128,256,512,1024,2048,4096",
        "side": 1.0,
        "cutoff": 131072,
        "sweeps": 100,
    },
    "gronwall": {
        **_COMMON,
        "s": 0.5,
        "side": 1.0,
        "grid": 128,
        "n": 1024,
        "t_final": 0.5,
        "dt": 5e-5,
        "amplitude": 0.25,
        "lattice_start": False,
    },
    "supercritical": {
        **_COMMON,
        "sizes": "16,32,64,128,256,512,1024",
        "offset_factor": 0.25,
        "phase_samples": 512,
    },
    "pde": {
        **_COMMON,
        "grid": 128,
        "d": 1,
        "s": 0.5,
        "side": 1.0,
        "beta": math.inf,
        "dt": 1e-5,
        "t_final": 0.01,
        "amplitude": 0.25,
    },
    "selftest": {**_COMMON},
}


def _load_config_file(path: str) -> dict:
    with open(path, "rb") as fh:
        head = fh.read()
    if path.endswith(".json"):
        return json.loads(head.decode())
    import tomli

    return tomli.loads(head.decode())


def _coerce(value, default):
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        return str(value).lower() in ("1", "true", "yes")
    if isinstance(default, int) and not isinstance(default, bool):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def resolve_config(command: str, file_cfg: dict, overrides: dict) -> dict:
    schema = _SCHEMAS[command]
    cfg = dict(schema)
    for source in (file_cfg, overrides):
        for key, value in source.items():
            norm = key.replace("-", "_")
            if norm in ("config", "command"):
                continue
            if norm not in schema:
                raise ConfigurationError(f"unknown key {key}")
            if value is not None:
                cfg[norm] = _coerce(value, schema[norm])
    return cfg


def _jsonable(value):
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _write_resolved(cfg: dict, command: str):
    os.makedirs(cfg["out"], exist_ok=True)
    payload = _jsonable({"command": command, **cfg})
    with open(os.path.join(cfg["out"], "config.resolved.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def _make_spec(cfg: dict) -> KernelSpec:
    if cfg.get("domain", "torus") == "torus":
        return KernelSpec(cfg["d"], cfg["s"], Torus(cfg["side"], cfg["cutoff"]))
    return KernelSpec(cfg["d"], cfg["s"])


def _interaction_matrix(name: str, d: int):
    if name == "-identity":
        return -np.eye(d)
    if name == "rotation":
        if d != 2:
            raise ConfigurationError("rotation interaction needs d = 2")
        return np.array([[0.0, -1.0], [1.0, 0.0]])
    raise ConfigurationError(f"unknown interaction matrix {name}")


def _write_trajectory(snaps, path: str) -> None:
    import io

    with open(path, "w") as fh:
        for i, snap in enumerate(snaps):
            buf = io.StringIO()
            write_particles_csv(snap, buf)
            text = buf.getvalue()
            fh.write(text if i == 0 else "".join(text.splitlines(keepends=True)[1:]))


def _cmd_simulate_first_order(cfg: dict) -> int:
    spec = _make_spec(cfg)
    if cfg["domain"] == "torus":
        mu = torus_uniform(cfg["side"], cfg["d"])
    else:
        mu = uniform_interval()
    X0 = sample_iid(mu, cfg["n"], seed=cfg["seed"])
    scheme = cfg["scheme"] or ("rk4" if cfg["beta"] == math.inf else "euler_maruyama")
    external = None
    if cfg["external"] == "quadratic":
        external = Quadratic(cfg["external_coef"])
    elif cfg["external"] != "none":
        raise ConfigurationError(f"unknown external field {cfg['external']}")
    params = FlowParams(
        m_matrix=_interaction_matrix(cfg["m"], cfg["d"]),
        beta=cfg["beta"],
        dt=cfg["dt"],
        scheme=scheme,
        external=external,
    )
    snaps = integrate_first_order(
        X0, params, spec, cfg["steps"], seed=cfg["seed"], snapshot_every=cfg["snap_every"]
    )
    _write_trajectory(snaps, os.path.join(cfg["out"], "trajectory.csv"))
    return 0


def _cmd_simulate_newtonian(cfg: dict) -> int:
    n = cfg["n"]
    eps = cfg["eps"]
    dt = cfg["dt"] or eps / 100.0
    params = FlowParams(
        m_matrix=-1.0,
        gamma=cfg["gamma"],
        epsilon=eps,
        external=Quadratic(2.0),
        dt=dt,
        scheme="leapfrog",
    )
    spec = KernelSpec(1, -1.0)
    x0 = coulomb_1d_centers(n) + cfg["offset_factor"] / n
    st = ParticleState(x0[:, None], np.zeros((n, 1)))
    snaps = integrate_newtonian(st, params, spec, cfg["steps"], snapshot_every=cfg["snap_every"])
    _write_trajectory(snaps, os.path.join(cfg["out"], "trajectory.csv"))
    return 0


def _cmd_energy(cfg: dict) -> int:
    spec = _make_spec(cfg)
    if cfg["domain"] == "torus":
        mu = torus_uniform(cfg["side"], cfg["d"])
    else:
        mu = uniform_interval()
    X = sample_iid(mu, cfg["n"], seed=cfg["seed"])
    rep = modulated_energy(X, mu, spec)
    side = cfg["side"] if cfg["domain"] == "torus" else None
    if side is not None:

        def f(x):
            return np.sin(2 * math.pi * x[:, 0] / side)[:, None]

        def gf(x):
            return (2 * math.pi / side * np.cos(2 * math.pi * x[:, 0] / side))[:, None, None]

        v = VectorField.from_callable(1, f, gf, side=side)
        a1 = commutator_a1(X, mu, v, spec)
        if spec.s >= max(0, spec.d - 2):
            variant = "sup_c"
        elif spec.s < 0:
            variant = "nonsing"
        else:
            variant = None
        if variant is not None:
            rhs = commutator_bound_rhs(X, mu, v, spec, variant, norm_grid=256)
            ratio = abs(a1) / rhs if rhs > 0 else math.nan
        else:
            ratio = math.nan
    else:
        ratio = 0.0
    with open(os.path.join(cfg["out"], "energy.csv"), "w") as fh:
        write_energy_csv(
            [
                {
                    "N": X.n,
                    "s": spec.s,
                    "d": spec.d,
                    "fN": rep.fn,
                    "logOffset": rep.log_offset,
                    "shifted": rep.shifted,
                    "additiveScale": rep.additive_scale,
                    "ratioA1": ratio,
                }
            ],
            fh,
        )
    return 0


def _cmd_pde(cfg: dict) -> int:
    d = cfg["d"]
    if d not in (1, 2):
        raise ConfigurationError("pde supports d = 1 or 2")
    spec = KernelSpec(d, cfg["s"], Torus(cfg["side"], cfg["grid"] // 3))
    n = cfg["grid"]
    xg = np.arange(n) * (cfg["side"] / n)
    if d == 1:
        vals = (1.0 + cfg["amplitude"] * np.cos(2 * math.pi * xg / cfg["side"])) / cfg["side"]
        m = -1.0
    else:
        X = np.cos(2 * math.pi * xg / cfg["side"])[:, None] * np.ones((1, n))
        vals = (1.0 + cfg["amplitude"] * X) / cfg["side"] ** 2
        m = -np.eye(2)
    mu0 = gridded_torus(vals, cfg["side"])
    params = FlowParams(m_matrix=m, beta=cfg["beta"], dt=cfg["dt"],
                        scheme="rk4" if cfg["beta"] == math.inf else "euler_maruyama")
    run = solve_mf_pde(mu0, params, spec, cfg["t_final"],
                       snapshot_every=cfg["snap_every"], mode_cutoff=cfg["grid"] // 3)
    with open(os.path.join(cfg["out"], "density.csv"), "w") as fh:
        if d == 1:
            fh.write("t,k0,value\n")
            for t, snap in zip(run.times, run.snapshots):
                for j, val in enumerate(snap.kind.values):
                    fh.write(f"{t:.17g},{j},{val:.17g}\n")
        else:
            fh.write("t,k0,k1,value\n")
            for t, snap in zip(run.times, run.snapshots):
                arr = snap.kind.values
                for j0 in range(n):
                    for j1 in range(n):
                        fh.write(f"{t:.17g},{j0},{j1},{arr[j0, j1]:.17g}\n")
    meta = _jsonable(
        {
            "grid": run.grid_n,
            "dt": run.dt,
            "beta": run.beta,
            "m": [[float(v) for v in row] for row in np.atleast_2d(run.m_matrix)],
            "seed": cfg["seed"],
            "final_time": run.final_time,
        }
    )
    with open(os.path.join(cfg["out"], "density.meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def selftest_checks() -> list[tuple[str, bool]]:
    """Fast invariant suite: one line per check."""
    from .equilibrium import equilibrium_1d_coulomb_quadratic, zeta
    from .kernels import GaussianProfile, eval_g, eval_g_eta, grad_g, mellin_constant, torus_g
    from .measures import nearest_neighbor_radii

    checks = []
    spec = KernelSpec(3, 2.0)
    checks.append(("kernel value s=2 r=2", abs(eval_g(spec, 2.0) - 0.125) < 1e-15))
    g = grad_g(KernelSpec(2, 1.0), [2.0, 0.0])
    checks.append(("kernel gradient s=1", abs(g[0] + 0.25) < 1e-15))
    gp = GaussianProfile()
    checks.append(("Mellin constant (Gaussian, s=1)", abs(mellin_constant(gp, 2, 1.0) - 2.0) < 1e-12))
    sp1 = KernelSpec(1, 0.5)
    ge = eval_g_eta(sp1, gp, 1e-4, 1.0)
    checks.append(("truncation reconstructs g", abs(ge - eval_g(sp1, 1.0)) < 1e-8))
    tsp = KernelSpec(1, 0.0, Torus(1.0, 100000))
    checks.append(
        (
            "periodic log kernel closed form",
            abs(torus_g(tsp, 0.25) + math.log(2 * math.sin(math.pi * 0.25))) < 1e-4,
        )
    )
    mu = torus_uniform(1.0, 1)
    tsp2 = KernelSpec(1, 0.5, Torus(1.0, 512))
    X = sample_iid(mu, 32, seed=1)
    rep = modulated_energy(X, mu, tsp2)
    from .energy import energy_split

    t1, t2, t3 = energy_split(X, mu, tsp2, gp, eta=0.05)
    checks.append(("energy split reconstructs fN", abs(t1 + t2 + t3 - rep.fn) < 1e-9 * abs(rep.fn) + 1e-14))
    checks.append(("split head nonnegative", t1 >= -1e-12))
    muf = uniform_interval()
    spf = KernelSpec(1, -1.0)
    Xf = sample_iid(muf, 24, seed=2)
    repf = modulated_energy(Xf, muf, spf)
    a1 = commutator_a1(Xf, muf, VectorField.identity(1), spf)
    checks.append(("Euler identity A1 = -2s fN", abs(a1 + 2 * spf.s * repf.fn) < 1e-10 * abs(2 * spf.s * repf.fn)))
    checks.append(("nonsingular fN >= 0", repf.fn >= -1e-12))
    eq = equilibrium_1d_coulomb_quadratic()
    pts = np.linspace(-0.45, 0.45, 7)[:, None]
    checks.append(("equilibrium residual", float(eq.equilibrium_residual(pts).max()) < 1e-8))
    checks.append(("zeta nonnegative", float(zeta(np.linspace(-2, 2, 101)[:, None], eq).min()) > -1e-12))
    from .dynamics import exact_1d_coulomb

    n = 16
    eps = 0.05
    x0 = coulomb_1d_centers(n) + 1.0 / (4 * n)
    params = FlowParams(m_matrix=-1.0, epsilon=eps, external=Quadratic(2.0), dt=eps / 100, scheme="leapfrog")
    st = ParticleState(x0[:, None], np.zeros((n, 1)))
    snaps = integrate_newtonian(st, params, KernelSpec(1, -1.0), 200)
    xe, _, _ = exact_1d_coulomb(x0, np.zeros(n), eps, snaps[-1].time)
    checks.append(("leapfrog tracks 1D oracle", float(np.abs(snaps[-1].positions[:, 0] - xe).max()) < 1e-6))
    r = nearest_neighbor_radii(ParticleState(np.array([[0.0], [1.0]])), 10.0)
    checks.append(("nearest-neighbor radii", np.allclose(r, 0.25)))
    s1 = sample_iid(mu, 100, seed=3)
    s2 = sample_iid(mu, 100, seed=3)
    checks.append(("sampling determinism", bool(np.array_equal(s1.positions, s2.positions))))
    return checks


def _cmd_selftest(cfg: dict) -> int:
    checks = selftest_checks()
    ok = True
    for name, passed in checks:
        print(f"{'PASS' if passed else 'FAIL'}  {name}")
        ok = ok and passed
    return 0 if ok else 2


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="riesz-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, schema in _SCHEMAS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        for key, default in schema.items():
            flag = "--" + key.replace("_", "-")
            if isinstance(default, bool):
                p.add_argument(flag, default=None)
            else:
                p.add_argument(flag, default=None)
    args = parser.parse_args(argv)
    command = args.command
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        file_cfg = _load_config_file(args.config) if args.config else {}
        cfg = resolve_config(command, file_cfg, overrides)
        if cfg["threads"]:
            _accel.set_threads(int(cfg["threads"]))
        elif os.environ.get("RIESZ_LAB_THREADS"):
            _accel.set_threads(int(os.environ["RIESZ_LAB_THREADS"]))
        _write_resolved(cfg, command)
        if command == "simulate-first-order":
            return _cmd_simulate_first_order(cfg)
        if command == "simulate-newtonian":
            return _cmd_simulate_newtonian(cfg)
        if command == "energy":
            return _cmd_energy(cfg)
        if command == "pde":
            return _cmd_pde(cfg)
        if command == "selftest":
            return _cmd_selftest(cfg)
        if command == "rate-scan":
            rcfg = RateScanConfig(
                scenario=cfg["scenario"],
                d=cfg["d"],
                s=cfg["s"],
                sizes=_parse_sizes(cfg["sizes"]),
                side=cfg["side"],
                cutoff=cfg["cutoff"],
                seed=cfg["seed"],
                sweeps=cfg["sweeps"],
                out_dir=cfg["out"],
            )
            verdict = rate_scan(rcfg)
            return 0 if verdict["pass"] else 2
        if command == "gronwall":
            gcfg = GronwallConfig(
                s=cfg["s"],
                side=cfg["side"],
                grid_n=cfg["grid"],
                n_particles=cfg["n"],
                t_final=cfg["t_final"],
                dt=cfg["dt"],
                snapshot_every=cfg["snap_every"] or 500,
                amplitude=cfg["amplitude"],
                seed=cfg["seed"],
                out_dir=cfg["out"],
                lattice_start=cfg["lattice_start"],
            )
            verdict = gronwall_track(gcfg)
            return 0 if verdict["pass"] else 2
        if command == "supercritical":
            scfg = SupercriticalConfig(
                sizes=_parse_sizes(cfg["sizes"]),
                offset_factor=cfg["offset_factor"],
                phase_samples=cfg["phase_samples"],
                seed=cfg["seed"],
                out_dir=cfg["out"],
            )
            verdict = supercritical_scan(scfg)
            return 0 if verdict["pass"] else 2
        if command == "commutator-scan":
            ccfg = RatioScanConfig(
                s=cfg["s"],
                side=cfg["side"],
                cutoff=cfg["cutoff"],
                sizes=_parse_sizes(cfg["sizes"]),
                samples=cfg["samples"],
                variant=cfg["variant"],
                seed=cfg["seed"],
                out_dir=cfg["out"],
            )
            verdict = commutator_ratio_scan(ccfg)
            return 0 if verdict["pass"] else 2
        raise ConfigurationError(f"unknown command {command}")
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

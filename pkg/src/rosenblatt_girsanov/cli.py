"""Command-line driver: ``simulate``, ``verify``, ``selftest`` and ``examples``.

Exit statuses: 0 success, 1 failed check or malformed input, 2 weight
degeneracy in ``verify`` (argparse also uses 2 for usage errors), 3 drift
removal on a model that is not reducible.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import frac_calc, girsanov, kernels, simulate, verify
from .frac_calc import FracOrder
from .grid import SampledFunction, TimeGrid

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_DEGENERATE = 2
EXIT_NOT_REDUCIBLE = 3


@dataclass(frozen=True)
class RunConfig:
    command: str = "simulate"
    H: float = 0.7
    T: float = 1.0
    n: int = 256
    N: int = 20000
    seed: int = 0
    shift: str = "power:0"
    out: str = "."
    k: float = 3.0

    def validate(self) -> "RunConfig":
        kernels.make_hurst(self.H)
        TimeGrid(self.T, self.n)
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed!r}")
        if not self.k > 0:
            raise ValueError(f"k must be positive, got {self.k!r}")
        return replace(self, n=int(self.n), N=int(self.N), seed=int(self.seed))

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.T, self.n)

    def out_dir(self) -> Path:
        p = Path(self.out)
        p.mkdir(parents=True, exist_ok=True)
        if not os.access(p, os.W_OK):
            raise OSError(f"output directory {p} is not writable")
        return p


def _load_config(path) -> dict:
    text = Path(path).read_text()
    if str(path).endswith((".yaml", ".yml")):
        import yaml

        data = yaml.safe_load(text) or {}
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ValueError(f"config {path} must hold a mapping")
    known = {f.name for f in fields(RunConfig)} - {"command"}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return data


def _resolve(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(_load_config(args.config))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None and f.name != "command":
            values[f.name] = v
    return RunConfig(command=args.command, **values).validate()


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for r in rows:
            wr.writerow([c if isinstance(c, str) else _fmt(c) for c in r])


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: RunConfig) -> int:
    bundle = simulate.simulate_bundle(cfg.H, cfg.grid, cfg.seed, np.arange(cfg.N))
    path = cfg.out_dir() / "paths.csv"
    bundle.to_csv(path)
    print(f"wrote {cfg.N} paths x {cfg.n + 1} nodes to {path}")
    return EXIT_OK


def _mc_config(cfg: RunConfig, shift) -> verify.McConfig:
    return verify.McConfig(H=cfg.H, T=cfg.T, n=cfg.n, N=cfg.N, seed=cfg.seed, shift=shift, k=cfg.k)


def _run_verify(cfg: RunConfig, shift, name="report.csv") -> int:
    report = verify.run_mc(_mc_config(cfg, shift))
    report.to_csv(cfg.out_dir() / name)
    print(report.summary())
    if report.degenerate:
        print("verification inconclusive: weight degeneracy", file=sys.stderr)
        return EXIT_DEGENERATE
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_verify(cfg: RunConfig) -> int:
    if cfg.N < 100:
        raise ValueError("verify needs N >= 100")
    spec = girsanov.parse_shift(cfg.shift, cfg.grid, cfg.H)
    return _run_verify(cfg, spec)


def _selftest_checks(n: int, perturb_cH: float = 1.0):
    """``(name, passed, detail)`` for the deterministic invariant suite."""
    grid = TimeGrid(1.0, n)
    one = SampledFunction.constant(grid)
    out = []

    v = frac_calc.frac_integral(one, FracOrder(0.5, "left")).values[-1]
    rel = abs(v - 1 / math.gamma(1.5)) * math.gamma(1.5)
    out.append(("I^1/2 1 at x=1", rel < 5e-3, f"rel err {rel:.2e}"))

    smooth = SampledFunction.from_callable(grid, lambda x: np.sin(2 * x) + x**2)
    a = frac_calc.frac_integral(frac_calc.frac_integral(smooth, FracOrder(0.3, "left")), FracOrder(0.4, "left"))
    b = frac_calc.frac_integral(smooth, FracOrder(0.7, "left"))
    err = float(np.max(np.abs(a(grid.nodes) - b(grid.nodes))))
    out.append(("semigroup I^0.3 I^0.4 = I^0.7", err < 1e-2, f"sup err {err:.2e}"))

    back = frac_calc.frac_derivative(frac_calc.frac_integral(smooth, FracOrder(0.4, "left")), FracOrder(0.4, "left"))
    err = float(np.max(np.abs(back(grid.nodes[1:-1]) - smooth(grid.nodes[1:-1]))))
    out.append(("inversion D^a I^a f = f", err < 1e-2, f"sup err {err:.2e}"))

    fw = frac_calc.weighted_frac_op(smooth, 0.35, "forward")
    err = float(np.max(np.abs(frac_calc.weighted_frac_op(fw, 0.35, "inverse")(grid.nodes[1:]) - smooth(grid.nodes[1:]))))
    out.append(("weighted operator roundtrip", err < 1e-2, f"sup err {err:.2e}"))

    worst = 0.0
    for alpha in (0.15, 0.25, 0.35):
        for u, w in ((0.3, 0.7), (0.5, 0.9)):
            lhs = kernels.beta_identity_lhs(alpha, u, w, n=n)
            worst = max(worst, abs(lhs / abs(u - w) ** (2 * alpha - 1) - 1))
    out.append(("Beta identity", worst < 1e-2, f"max rel err {worst:.2e}"))

    hp = kernels.make_hurst(0.75)
    if perturb_cH != 1.0:
        hp = replace(hp, cH=hp.cH * perturb_cH)
    km = kernels.volterra_kernel(hp, grid)
    var = float((km.entries[-1] ** 2) @ km.partition.widths)
    out.append(("FBM isometry sum K^2 = 1", abs(var - 1) < 1e-2, f"{var:.6f}"))

    cov = float((km.entries[grid.n // 2] * km.entries[-1]) @ km.partition.widths)
    exact = kernels.fbm_covariance(0.5, 1.0, hp)
    out.append(("FBM covariance R(1/2, 1)", abs(cov - exact) < 1e-2, f"{cov:.6f} vs {exact:.6f}"))

    half = SampledFunction.from_callable(grid, lambda x: (x <= 0.5) * 1.0, kind="step")
    adj = kernels.adjoint_op(half, hp, points=km.partition.midpoints)
    norm = float(adj**2 @ km.partition.widths)
    exact = kernels.fbm_covariance(0.5, 0.5, 0.75)
    out.append(("adjoint isometry ||d1K* 1_(0,1/2)||^2", abs(norm - exact) < 1e-2, f"{norm:.6f} vs {exact:.6f}"))

    r = 2 * kernels.rosenblatt_l2_norm_sq(0.75, grid)
    out.append(("Rosenblatt 2||K||^2 vs t^2H", abs(r - 1) < 2e-2, f"{r:.5f}"))
    return out


def cmd_selftest(n: int = 512, perturb_cH: float = 1.0) -> int:
    t0 = time.perf_counter()
    checks = _selftest_checks(n, perturb_cH)
    for name, ok, detail in checks:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    ok = all(c[1] for c in checks)
    print(f"{sum(c[1] for c in checks)}/{len(checks)} checks passed in {time.perf_counter() - t0:.1f}s")
    return EXIT_OK if ok else EXIT_FAIL


def _example_power(cfg: RunConfig, alpha: float) -> int:
    grid = cfg.grid
    hp = kernels.make_hurst(cfg.H)
    spec = girsanov.power_shift(grid, hp, alpha)
    out = cfg.out_dir()
    t = grid.nodes
    phi = spec.phi(t[1:])
    _write_rows(out / "power_theta.csv", ["t", "theta", "phi"],
                zip(t[1:], spec.theta(t[1:]), phi))
    drift = hp.dH * girsanov.theta_square_integral(spec.theta)
    exact = girsanov.power_shift_drift(hp, alpha, t)
    _write_rows(out / "power_drift.csv", ["t", "drift", "closed_form"], zip(t, drift, exact))
    print(f"theta(u) = {spec.theta.values[0]:.6g} * u^{spec.theta.power:g}; "
          f"max |drift - closed form| = {np.max(np.abs(drift - exact)):.2e}")
    return _run_verify(cfg, spec, "power_report.csv")


def _parse_set(text: str):
    return [tuple(float(v) for v in p.split(",")) for p in text.split(";") if p.strip()]


def _example_indicator(cfg: RunConfig, sets) -> int:
    grid = cfg.grid
    hp = kernels.make_hurst(cfg.H)
    specs = [girsanov.indicator_shift(grid, hp, _parse_set(s)) for s in sets]
    w = simulate.gen_increments(grid, cfg.seed, 0)
    drifts = [hp.dH * girsanov.theta_square_integral(s.theta) for s in specs]
    stoch = [2 * hp.dH * simulate.wiener_integral_fbm(s.theta, w, hp.companion, upto="nodes") for s in specs]
    out = cfg.out_dir()
    names = [s.description for s in specs]
    header = ["t", "d_H*t"] + [f"drift[{m}]" for m in names] + [f"stochastic[{m}]" for m in names]
    _write_rows(out / "indicator.csv", header, zip(grid.nodes, hp.dH * grid.nodes, *drifts, *stoch))
    gap = max(float(np.max(np.abs(d - hp.dH * grid.nodes))) for d in drifts)
    diff = float(np.sqrt(np.sum(np.diff(stoch, axis=0)[0] ** 2) * grid.dt))
    same = gap <= 1e-12
    print(f"deterministic drifts equal d_H t: max deviation {gap:.2e} ({'ok' if same else 'FAIL'})")
    print(f"L2 distance between stochastic shifts: {diff:.6g} ({'differ' if diff > 0 else 'identical'})")
    return EXIT_OK if same and diff > 0 else EXIT_FAIL


def _example_drift(cfg: RunConfig, a_const: float | None, b_const: float, sign: str) -> int:
    grid = cfg.grid
    hp = kernels.make_hurst(cfg.H)
    if a_const is None:
        a_const = b_const**2 / (4 * hp.dH)
    a = SampledFunction.constant(grid, a_const)
    b = SampledFunction.constant(grid, b_const)
    try:
        res = girsanov.drift_removal(a, b, hp, sign)
    except girsanov.NotReducibleError as exc:
        print(json.dumps({"reducible": False, "node": exc.node, "t": exc.t, "D": exc.D, "message": str(exc)}))
        return EXIT_NOT_REDUCIBLE
    theta = res.theta
    print(f"D in [{res.D.min():.6g}, {res.D.max():.6g}], theta = {theta.values[0]:.6g}")
    if not res.full:
        print("reduces to +-int sqrt(D) dB~ + R~ (centered, not a Rosenblatt process)")
        return EXIT_OK
    spec = girsanov.phi_from_theta(theta, hp)
    bundle = simulate.simulate_bundle(hp, grid, cfg.seed, 0)
    X = girsanov.drifted_model_path(a, b, bundle)
    tilde = girsanov.shifted_rosenblatt_via_tilde(bundle.w, spec, hp)
    resid = float(np.max(np.abs(X - tilde)))
    _write_rows(cfg.out_dir() / "drift_removal.csv", ["t", "X", "R_tilde"], zip(grid.nodes, X, tilde))
    print(f"X = R~ : max pathwise residual {resid:.3e}")
    return EXIT_OK


def cmd_examples(which: str, cfg: RunConfig, args=None) -> int:
    if which == "power":
        return _example_power(cfg, getattr(args, "alpha", 0.0) if args else 0.0)
    if which == "indicator":
        sets = getattr(args, "sets", None) if args else None
        T = cfg.T
        sets = sets or [f"0,{T / 2:g}", f"{T / 4:g},{3 * T / 4:g}"]
        return _example_indicator(cfg, sets)
    if which == "drift-removal":
        a = getattr(args, "a", None) if args else None
        b = getattr(args, "b", 1.0) if args else 1.0
        sign = getattr(args, "sign", "+") if args else "+"
        return _example_drift(cfg, a, b, sign)
    raise ValueError(f"unknown example {which!r}")


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser) -> None:
    # defaults live in RunConfig so that a config file can fill gaps
    p.add_argument("--config", help="JSON or YAML file with run settings; flags override it")
    p.add_argument("--H", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--shift", help="zero | power:ALPHA | indicator:a,b;c,d | table:PATH")
    p.add_argument("--out", help="output directory")
    p.add_argument("--k", type=float, help="tolerance multiplier in standard errors")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rosenblatt-girsanov", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("simulate", help="write paths.csv"))
    _common(sub.add_parser("verify", help="importance-sampling check of the measure change"))
    st = sub.add_parser("selftest", help="deterministic invariant checks")
    st.add_argument("--n", type=int, default=512)
    st.add_argument("--perturb-cH", type=float, default=1.0, help=argparse.SUPPRESS)
    ex = sub.add_parser("examples", help="worked examples")
    ex.add_argument("which", choices=["power", "indicator", "drift-removal"])
    _common(ex)
    ex.add_argument("--alpha", type=float, default=0.0, help="power example exponent")
    ex.add_argument("--set", dest="sets", action="append", help="indicator interval set a,b;c,d (repeat)")
    ex.add_argument("--a", type=float, help="drift-removal constant a (default makes D = 0)")
    ex.add_argument("--b", type=float, default=1.0, help="drift-removal constant b")
    ex.add_argument("--sign", choices=["+", "-"], default="+")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "selftest":
        return cmd_selftest(args.n, args.perturb_cH)
    try:
        cfg = _resolve(args)
    except (ValueError, OSError) as exc:
        parser.error(str(exc))
    try:
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "verify":
            return cmd_verify(cfg)
        return cmd_examples(args.which, cfg, args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

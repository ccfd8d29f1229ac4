"""Command-line front end: ``pdig run | generate | accept``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ContractError, NonConvergenceError, SlaterError
from .harness import reference_solution
from .plot import loglog_svg
from .problem import (
    SlaterCertificate,
    build_bpd,
    build_lasso,
    default_h_hat,
    instance_hash,
    load_problem,
    save_problem,
    slater_dual_bound,
)
from .solver import run_baseline_fullpd, run_pdig

PRESETS = {
    "desk": {"m": 60, "n": 12, "p": 17, "lam": 0.1, "noise_std": 0.1, "di": 5, "delta": 1.0},
    "full": {"m": 1000, "n": 40, "p": 45, "lam": 0.1, "noise_std": 0.1, "di": 5, "delta": 1.0},
}


@dataclass
class CliConfig:
    command: str
    problem: str = "lasso"
    instance: Optional[str] = None
    preset: str = "full"
    m: Optional[int] = None
    n: Optional[int] = None
    p: Optional[int] = None
    lam: Optional[float] = None
    delta: Optional[float] = None
    di: Optional[int] = None
    noise_std: Optional[float] = None
    seed: int = 0
    epochs: int = 2000
    record_every: int = 10
    solver: str = "pdig"
    dual_bound: Optional[float] = None
    reference: str = "long-run"
    ref_factor: int = 50
    out_dir: str = "out"
    quick: bool = False

    def resolve(self):
        """Fill unset sizes from the preset and validate."""
        preset = PRESETS[self.preset]
        for key, val in preset.items():
            if getattr(self, key) is None:
                setattr(self, key, val)
        if self.problem == "file" and not self.instance:
            raise ConfigurationError("--problem file needs --instance PATH")
        if self.epochs < 1:
            raise ConfigurationError("--epochs must be >= 1")
        if self.record_every < 1:
            raise ConfigurationError("--record-every must be >= 1")
        if self.ref_factor < 1:
            raise ConfigurationError("--ref-factor must be >= 1")
        if self.dual_bound is not None and not self.dual_bound > 0:
            raise ConfigurationError("--dual-bound must be positive")
        return self


def build_instance(cfg: CliConfig):
    if cfg.problem == "lasso":
        return build_lasso(m=cfg.m, n=cfg.n, p=cfg.p, lam=cfg.lam, noise_std=cfg.noise_std, seed=cfg.seed)
    if cfg.problem == "bpd":
        return build_bpd(m=cfg.m, di=cfg.di, n=cfg.n, delta=cfg.delta, seed=cfg.seed, noise_std=cfg.noise_std)
    return load_problem(cfg.instance)


def resolve_dual_bound(p, override=None):
    """Explicit override, then the instance's own B, then a Slater estimate."""
    if override is not None:
        return p.with_dual_bound(override), "override"
    if p.dual_bound_B is not None:
        return p, "instance"
    x_hat = p.metadata.get("slater_point")
    if x_hat is None:
        raise ConfigurationError(
            "no dual bound: the instance has no Slater point; pass --dual-bound B"
        )
    cert = SlaterCertificate(np.asarray(x_hat, dtype=float), default_h_hat(p))
    return p.with_dual_bound(slater_dual_bound(p, cert)), "slater"


def _write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
        fh.write("\n")


def cmd_run(cfg: CliConfig) -> int:
    p = build_instance(cfg)
    p, b_source = resolve_dual_bound(p, cfg.dual_bound)
    os.makedirs(cfg.out_dir, exist_ok=True)
    ref = None
    if cfg.reference == "long-run":
        ref = reference_solution(p, budget=cfg.ref_factor * cfg.epochs, mode="long-run")
        p = p.with_reference(ref)
    runner = run_pdig if cfg.solver == "pdig" else run_baseline_fullpd
    rec = runner(p, cfg.epochs, record_every=cfg.record_every)
    rec.to_csv(os.path.join(cfg.out_dir, "metrics.csv"))
    title = f"{cfg.solver} on {p.metadata.get('generator', 'instance')}"
    loglog_svg(os.path.join(cfg.out_dir, "subopt.svg"), rec.k, {cfg.solver: rec.subopt}, "|f(x_avg) - f*|", title)
    loglog_svg(os.path.join(cfg.out_dir, "infeas.svg"), rec.k, {cfg.solver: rec.infeas}, "dist_-K(A x_avg - b)", title)
    save_problem(p, os.path.join(cfg.out_dir, "instance.json"))
    resolved = asdict(cfg)
    resolved.update(
        dual_bound_resolved=p.dual_bound_B,
        dual_bound_source=b_source,
        a_max=rec.a_max,
        engine=rec.engine,
        instance_sha256=instance_hash(p),
        reference_f_star=None if ref is None else ref.f_star,
        metadata={k: v for k, v in p.metadata.items() if k not in ("x_bar", "x_true", "slater_point")},
    )
    _write_json(os.path.join(cfg.out_dir, "config.json"), resolved)
    print(f"wrote {cfg.out_dir}/metrics.csv ({len(rec.k)} rows), subopt.svg, infeas.svg, config.json, instance.json")
    return 0


def cmd_generate(cfg: CliConfig) -> int:
    p = build_instance(cfg)
    if cfg.dual_bound is not None:
        p = p.with_dual_bound(cfg.dual_bound)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "instance.json")
    save_problem(p, path)
    print(f"wrote {path} (sha256 {instance_hash(p)[:16]})")
    return 0


def cmd_accept(cfg: CliConfig) -> int:
    from .acceptance import run_all

    results = run_all(quick=cfg.quick, out_dir=cfg.out_dir)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed; artifacts in {cfg.out_dir}")
    return 1 if failed else 0


def build_parser():
    parser = argparse.ArgumentParser(prog="pdig", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def instance_flags(sp):
        sp.add_argument("--problem", choices=("lasso", "bpd", "file"), default="lasso")
        sp.add_argument("--instance", help="instance JSON for --problem file")
        sp.add_argument("--preset", choices=tuple(PRESETS), default="full",
                        help="size defaults; explicit --m/--n/... override them")
        sp.add_argument("--m", type=int)
        sp.add_argument("--n", type=int)
        sp.add_argument("--p", type=int)
        sp.add_argument("--lam", type=float)
        sp.add_argument("--delta", type=float)
        sp.add_argument("--di", type=int)
        sp.add_argument("--noise-std", type=float)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--dual-bound", type=float)
        sp.add_argument("--out-dir", default="out")

    run = sub.add_parser("run", help="solve an instance and write metrics and plots")
    instance_flags(run)
    run.add_argument("--epochs", type=int, default=2000)
    run.add_argument("--record-every", type=int, default=10)
    run.add_argument("--solver", choices=("pdig", "fullpd"), default="pdig")
    run.add_argument("--reference", choices=("long-run", "none"), default="long-run")
    run.add_argument("--ref-factor", type=int, default=50)

    gen = sub.add_parser("generate", help="write an instance JSON without solving")
    instance_flags(gen)

    acc = sub.add_parser("accept", help="run the acceptance suite")
    acc.add_argument("--quick", action="store_true")
    acc.add_argument("--out-dir", default="accept_out")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    fields = CliConfig.__dataclass_fields__
    cfg = CliConfig(**{k: v for k, v in vars(args).items() if k in fields})
    handlers = {"run": cmd_run, "generate": cmd_generate, "accept": cmd_accept}
    try:
        cfg.resolve()
        return handlers[cfg.command](cfg)
    except (ConfigurationError, ContractError, SlaterError, NonConvergenceError) as exc:
        print(f"pdig: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"pdig: I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

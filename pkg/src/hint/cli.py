"""Command-line entry point: ``hint <command> [--config C] [--seed S] [--out DIR]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""
import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, checkpoint_load, checkpoint_save
from .convergence import MapConfig, check_slope, convergence_study
from .coupling import DiagonalAffine, build_inn
from .experiments import (LinearDynamics, LinearGaussian, default_linear_dynamics, default_linear_gaussian,
                          run_clv, run_linear_filter, run_linear_gaussian, run_lorenz96)
from .hierarchical import build_hint
from .io import (CONVERGENCE_COLUMNS, ConfigError, load_config, validate_config, write_csv, write_experiment_bundle,
                 write_filter_metrics, write_json, write_samples, write_train_metrics)
from .models import IntegrationError, make_clv_experiment, make_lorenz96_experiment
from .numerics import SingularityError
from .oracles import GaussianPosterior
from .posterior import sample_posterior_case1, sample_posterior_case2, sample_posterior_hint
from .sequential import FilterConfig, FilterStepError, filter_run
from .transport import Case, LossSpec, NumericalError, SigmaAnneal, make_training_set, train
from .verify import run_invariant_suite

log = logging.getLogger("hint")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _pick(section, allowed, where):
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    return {k: section[k] for k in allowed if k in section}


def _linear_gaussian(problem, case):
    if problem.get("kind", "linear-gaussian") != "linear-gaussian":
        raise ConfigError("train/sample support problem.kind = 'linear-gaussian'")
    keys = ("A", "sigma_y", "prior_mean", "prior_cov")
    if not any(k in problem for k in keys):
        return default_linear_gaussian(case)
    missing = [k for k in keys if k not in problem]
    if missing:
        raise ConfigError(f"problem is missing {missing}")
    try:
        return LinearGaussian(*(problem[k] for k in keys))
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise ConfigError(f"invalid linear-Gaussian problem: {exc}") from exc


ARCH_KEYS = ("case", "n_layers", "depth", "hidden", "clamp", "mixing", "standardize")
TRAIN_KEYS = ("epochs", "train_set_size", "batch_size", "lr", "lr_decay", "n_samples", "anneal")


def cmd_train(cfg, rng, out, args):
    arch = _pick(cfg["architecture"], ARCH_KEYS, "architecture")
    tr = _pick(cfg["training"], TRAIN_KEYS, "training")
    case = Case.parse(arch.get("case", "hint"))
    lg = _linear_gaussian(cfg["problem"], case)
    problem = lg.forward_problem()
    y = cfg["problem"].get("y")
    anneal = tr.get("anneal")
    if anneal is not None:
        if len(anneal) != 2:
            raise ConfigError("training.anneal must be [start_sigma, factor]")
        anneal = SigmaAnneal(float(anneal[0]), float(anneal[1]))
    spec = LossSpec(case, batch_size=tr.get("batch_size", 256),
                    observed_y=None if y is None else np.asarray(y, dtype=np.float64), anneal=anneal)
    n_train = tr.get("train_set_size", 20_000)
    data = make_training_set(spec, problem, n_train, rng)
    kw = {"hidden": arch.get("hidden"), "clamp": arch.get("clamp", 2.0), "final_scale": 0.0}
    std = arch.get("standardize", True)
    L = arch.get("n_layers", 4)
    if case is Case.JOINT_TO_LATENT:
        tmap = build_hint(lg.dim_y, lg.dim_x, L, arch.get("depth", 2), rng,
                          normalizer=DiagonalAffine.fit(data) if std else None, **kw)
    elif case is Case.PRIOR_TO_LIKELIHOOD:
        tmap = build_inn(lg.dim_x, L, rng, normalizer=DiagonalAffine.fit(data[0]) if std else None,
                         mixing=arch.get("mixing", "householder"), **kw)
    elif case is Case.LATENT_TO_POSTERIOR:
        if y is None:
            raise ConfigError("the latent-to-posterior regime needs problem.y")
        tmap = build_inn(lg.dim_x, L, rng, mixing=arch.get("mixing", "householder"), **kw)
    else:
        raise ConfigError("use the 'filter' command for sequential inference")
    lr, decay, epochs = tr.get("lr", 1e-3), tr.get("lr_decay", 1.0), tr.get("epochs", 30)
    t0 = time.perf_counter()
    stamps = []
    report = train(tmap, spec, problem, epochs, n_train, rng, lr=lr, lr_decay=decay, data=data, seed=args.seed,
                   callback=lambda e, loss: stamps.append(time.perf_counter() - t0))
    meta = {"seed": args.seed, "epochs": epochs, "final_loss": report.losses[-1], "case": case.name.lower(),
            "n_forward_evals": problem.n_forward_evals, "y": y}
    ck = out / cfg["output"].get("checkpoint", "model.json")
    cid = checkpoint_save(tmap, ck, case=f"case{case.value}", metadata=meta)
    write_train_metrics(out / cfg["output"].get("metrics", "train_metrics.csv"), report.losses, lr, decay, stamps)
    print(f"trained {case.name.lower()} for {epochs} epochs, final loss {report.losses[-1]:.6g}")
    print(f"checkpoint {ck} (id {cid})")
    return EXIT_OK


def cmd_sample(cfg, rng, out, args):
    if args.checkpoint is None:
        raise ConfigError("sample needs --checkpoint")
    tmap, meta = checkpoint_load(args.checkpoint)
    n = args.n or cfg["training"].get("n_samples", 10_000)
    y = args.y if args.y is not None else cfg["problem"].get("y", meta.get("y"))
    case = meta.get("case", "joint_to_latent")
    cid = meta.get("checkpoint_id")
    if case in ("joint_to_latent", "sequential"):
        if y is None:
            raise ConfigError("sampling the joint map needs an observation (--y or problem.y)")
        s = sample_posterior_hint(tmap, y, n, rng, checkpoint_id=cid)
    elif case == "prior_to_likelihood":
        if y is None:
            raise ConfigError("sampling needs an observation (--y or problem.y)")
        s = sample_posterior_case1(tmap, y, n, rng, checkpoint_id=cid)
    else:
        s = sample_posterior_case2(tmap, n, rng, y=y, checkpoint_id=cid)
    path, side = write_samples(out / cfg["output"].get("samples", "samples.csv"), s, {"seed": args.seed})
    print(f"wrote {n} samples to {path} (provenance {side})")
    return EXIT_OK


FILTER_KEYS = ("n_particles", "train_set_size", "epochs", "warm_fraction", "warm_start", "batch_size", "lr",
               "lr_decay", "n_layers", "depth", "hidden", "clamp", "standardize")


def _filter_config(cfg):
    merged = {**cfg["architecture"], **cfg["training"]}
    merged.pop("case", None)
    merged.pop("n_samples", None)
    return FilterConfig(**_pick(merged, FILTER_KEYS, "architecture/training"))


def cmd_filter(cfg, rng, out, args):
    fcfg = _filter_config(cfg)
    p = dict(cfg["problem"])
    kind = p.pop("kind", "linear")
    summary = {"seed": args.seed, "kind": kind}
    if kind == "linear":
        n_steps = p.pop("n_steps", 5)
        if p:
            try:
                dyn = LinearDynamics(np.asarray(p["A_dyn"], dtype=np.float64), p["sigma_x"],
                                     np.atleast_2d(np.asarray(p["A_obs"], dtype=np.float64)), p["sigma_y"],
                                     GaussianPosterior(p["prior_mean"], p["prior_cov"]))
            except KeyError as exc:
                raise ConfigError(f"linear filter problem is missing {exc}") from exc
        else:
            dyn = default_linear_dynamics()
        res = run_linear_filter(rng, dyn, n_steps=n_steps, cfg=fcfg)
        states = res["states"]
        summary["kalman_comparison"] = res["steps"]
    elif kind in ("clv", "lorenz96"):
        n_obs = p.pop("n_obs", 3)
        if kind == "clv":
            exp = make_clv_experiment(rng, n_obs=n_obs, **p)
            obs = exp.observations
        else:
            exp = make_lorenz96_experiment(rng, **p)
            obs = exp.observations
        states = filter_run(exp.problem, obs, exp.init_prior_sampler, fcfg, rng)
        write_experiment_bundle(out, exp, name=kind)
        summary["truth"] = exp.truth[1:len(states) + 1]
        summary["params"] = exp.params
    else:
        raise ConfigError(f"unknown filter problem kind {kind!r}")
    write_filter_metrics(out / cfg["output"].get("metrics", "filter_metrics.csv"), [s.metrics for s in states])
    summary["steps"] = [{k: v for k, v in s.metrics.items() if k not in ("cov", "losses")} for s in states]
    write_json(out / "filter_summary.json", summary)
    for s in states:
        print(f"step {s.t}: cov trace {s.metrics['cov_trace']:.5g}, final loss {s.metrics['final_loss']:.5g}")
    return EXIT_OK


def cmd_benchmark(cfg, rng, out, args):
    tr = dict(cfg["training"])
    tr.pop("n_samples", None)
    name = args.name
    if name == "linear-gaussian":
        case = cfg["architecture"].get("case", "hint")
        res = run_linear_gaussian(rng, case=case, **_pick(tr, ("train_set_size", "epochs", "lr", "lr_decay",
                                                              "batch_size"), "training"))
        write_train_metrics(out / "train_metrics.csv", res["losses"], tr.get("lr", 3e-3), tr.get("lr_decay", 0.93))
        summary = {k: res[k] for k in ("case", "y", "mean_error", "cov_error", "posterior_mean", "reference_mean",
                                       "reference_cov", "n_forward_evals", "wall_time")}
        print(f"posterior mean error {res['mean_error']:.4f}, covariance error {res['cov_error']:.4f}")
    elif name == "clv":
        res = run_clv(rng, **_pick(tr, ("train_set_size", "epochs", "lr", "lr_decay"), "training"))
        write_csv(out / "clv_metrics.csv", ("epoch", "loss", "trace_mse"),
                  [{"epoch": i + 1, "loss": l, "trace_mse": m} for i, (l, m) in enumerate(zip(res["losses"], res["mse"]))])
        summary = {k: res[k] for k in ("reference_trace", "reference_mean", "reference_ess", "cov_trace", "mean",
                                       "truth", "observation", "params", "wall_time", "mse", "losses")}
        print(f"trace MSE {res['mse'][0]:.3e} -> {res['mse'][-1]:.3e}, reference trace {res['reference_trace']:.5g}")
    else:
        res = run_lorenz96(rng, **_pick(tr, ("train_set_size", "epochs", "lr", "lr_decay"), "training"))
        write_train_metrics(out / "train_metrics.csv", res["losses"], tr.get("lr", 3e-3), tr.get("lr_decay", 0.93))
        summary = {k: res[k] for k in ("baseline_loss", "final_loss", "posterior_mean", "truth", "observation",
                                       "params", "wall_time")}
        print(f"final loss {res['final_loss']:.5g} vs identity baseline {res['baseline_loss']:.5g}")
    summary["seed"] = args.seed
    write_json(out / f"benchmark_{name}.json", summary)
    return EXIT_OK


def cmd_verify(cfg, rng, out, args):
    results = run_invariant_suite(rng)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print("all invariants hold" if ok else "invariant check FAILED")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_convergence(cfg, rng, out, args):
    p = cfg["problem"]
    lg = _linear_gaussian(p, "hint") if p else LinearGaussian([[0.8]], 0.5, [0.3], [[1.0]])
    tr = _pick(cfg["training"], ("steps", "lr", "n_list", "replicates", "workers"), "training")
    arch = _pick(cfg["architecture"], ("n_layers", "depth", "hidden", "clamp", "init_seed"), "architecture")
    mc = MapConfig(**arch, **{k: tr[k] for k in ("steps", "lr") if k in tr})
    table = convergence_study(lg.forward_problem(), mc, tr.get("n_list", [500, 2000, 8000]),
                              tr.get("replicates", 8), rng=rng, workers=tr.get("workers", 1))
    write_csv(out / "convergence.csv", CONVERGENCE_COLUMNS, table.as_rows())
    for r in table.rows:
        print(f"N={r.n}: probe std {r.probe_std:.4g} ({r.replicates_ok} ok, {r.replicates_failed} failed)")
    if table.slope is not None:
        inside = check_slope(table)
        print(f"log-log slope {table.slope:.3f} ({'inside' if inside else 'WARNING: outside'} [-0.8, -0.2])")
    write_json(out / "convergence.json", {"slope": table.slope, "rows": table.as_rows(), "seed": args.seed})
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="hint", description="Hierarchical invertible neural transport")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config with problem/architecture/training/output")
    common.add_argument("--seed", type=int, default=0, help="unsigned 64-bit seed")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train a transport map and write a checkpoint")
    s = sub.add_parser("sample", parents=[common], help="draw posterior samples from a checkpoint")
    s.add_argument("--checkpoint", type=Path)
    s.add_argument("--y", type=lambda v: [float(t) for t in v.split(",")], help="comma-separated observation")
    s.add_argument("--n", type=int)
    sub.add_parser("filter", parents=[common], help="sequential filtering")
    b = sub.add_parser("benchmark", parents=[common], help="reduced-scale benchmarks")
    b.add_argument("name", choices=["clv", "lorenz96", "linear-gaussian"])
    sub.add_parser("verify", parents=[common], help="run the invariant suite")
    sub.add_parser("convergence", parents=[common], help="empirical convergence-rate study")
    return ap


COMMANDS = {"train": cmd_train, "sample": cmd_sample, "filter": cmd_filter, "benchmark": cmd_benchmark,
            "verify": cmd_verify, "convergence": cmd_convergence}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = load_config(args.config) if args.config else validate_config({})
        out = args.out or Path(cfg["output"].get("dir", "hint-out"))
        rng = np.random.default_rng(args.seed)
        return COMMANDS[args.command](cfg, rng, Path(out), args)
    except (ConfigError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, SingularityError, IntegrationError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FilterStepError as exc:
        code = EXIT_NUMERIC if isinstance(exc.__cause__, (NumericalError, ArithmeticError)) else EXIT_CONFIG
        print(f"filter failure: {exc}", file=sys.stderr)
        return code
    except (OSError, CheckpointError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

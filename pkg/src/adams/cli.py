"""Experiment runner.

Subcommands: train | simulate-ema | verify-theory | compare-updates | sweep.
Every command is driven by a validated JSON config (flags override file
keys), writes its effective config next to its outputs, and is byte-for-byte
deterministic given (config, seeds) at any thread count. Wall-clock timing
goes to stderr only, never into artifacts.

Exit codes: 0 pass, 1 suite failure, 2 config error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import analysis, config as cfgmod, ema, models, optim, theory, train
from .records import write_table
from .tensor import Tensor


def _write_json(path, payload: dict) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def _prepare_out(cfg: dict, command: str) -> str:
    out = cfg["out_dir"]
    os.makedirs(out, exist_ok=True)
    tmp = os.path.join(out, "effective_config.json.tmp")
    final = os.path.join(out, "effective_config.json")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(cfgmod.dumps({"command": command, **cfg}))
    os.replace(tmp, final)
    return out


def _map_ordered(fn, jobs, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, jobs))
    return [fn(job) for job in jobs]


def _hyperparams(section: dict) -> optim.HyperParams:
    return optim.HyperParams(
        beta1=section["beta1"],
        beta2=section["beta2"],
        weight_decay=section["weight_decay"],
        epsilon=section["epsilon"],
        peak_lr=section["peak_lr"],
        clip_threshold=section["clip_threshold"],
    )


def _schedule(section: dict) -> optim.Schedule:
    return optim.Schedule(
        warmup_steps=section["warmup_steps"],
        total_steps=section["total_steps"],
        final_lr_fraction=section["final_lr_fraction"],
    )


def _model_config(section: dict) -> models.LMConfig:
    return models.LMConfig(
        vocab=section["vocab"],
        context=section["context"],
        embed_dim=section["embed_dim"],
        hidden_dim=section["hidden_dim"],
    )


def _corpus_tokens(section: dict, model_cfg: models.LMConfig):
    corpus = models.make_corpus(
        vocab=model_cfg.vocab,
        seed=section["seed"],
        concentration=section["concentration"],
        peak=section["peak"],
    )
    tokens = corpus.tokens(section["length"], 0)
    val_tokens = corpus.tokens(max(section["length"] // 4, model_cfg.context + 1), 1)
    return corpus, tokens, val_tokens


def _run_train(cfg: dict, optimizer_section: dict, seed: int) -> train.TrainResult:
    model_cfg = _model_config(cfg["model"])
    _, tokens, val_tokens = _corpus_tokens(cfg["corpus"], model_cfg)
    model = models.TinyLM.init(cfg["model_seed"], model_cfg)
    return train.train_lm(
        model,
        tokens,
        optimizer_section["kind"],
        _hyperparams(optimizer_section),
        _schedule(cfg["schedule"]),
        cfg["steps"],
        cfg["batch_size"],
        seed,
        val_tokens=val_tokens,
        val_batches=cfg["val_batches"],
        val_batch_size=cfg["val_batch_size"],
    )


def cmd_train(cfg: dict) -> int:
    out = _prepare_out(cfg, "train")
    result = _run_train(cfg, cfg["optimizer"], cfg["seed"])
    result.record.write_csv(os.path.join(out, "trajectory.csv"))

    params = [result.model.params[n] for n in models.PARAM_ORDER]
    optim.save_checkpoint(os.path.join(out, "model.ckpt"), "tensors", len(result.record), params)
    state_tensors: list[Tensor] = []
    for name in models.PARAM_ORDER:
        state_tensors.extend(optim.state_tensors(result.states[name]))
    optim.save_checkpoint(
        os.path.join(out, "optimizer.ckpt"),
        cfg["optimizer"]["kind"],
        len(result.record),
        state_tensors,
    )
    _write_json(os.path.join(out, "summary.json"), result.summary)
    return 3 if result.summary["diverged"] else 0


def cmd_simulate_ema(cfg: dict) -> int:
    out = _prepare_out(cfg, "simulate-ema")
    grid = cfg["grid"] if cfg["grid"] else ema.default_grid()
    samples = cfg["samples"]
    base_seed = cfg["seed"]

    def one(job):
        index, point = job
        stats = ema.analytic_moments(point)
        mc = ema.mc_point(point, samples, base_seed + index)
        if mc.se_mean == 0.0:
            ok = math.isclose(mc.mean, stats.mean, rel_tol=1e-12, abs_tol=1e-12) and (
                mc.variance == stats.variance == 0.0
            )
            z_mean = 0.0
            z_var = 0.0
        else:
            z_mean = (mc.mean - stats.mean) / mc.se_mean
            z_var = (mc.variance - stats.variance) / mc.se_variance
            ok = abs(z_mean) <= 3.0 and abs(z_var) <= 3.0
        return point, stats, mc, z_mean, z_var, ok

    results = _map_ordered(one, list(enumerate(grid)), cfg["threads"])

    columns = (
        "process", "mu", "sigma", "beta", "beta1", "beta2", "t_burn",
        "analytic_mean", "analytic_var", "mc_mean", "mc_var",
        "se_mean", "se_var", "z_mean", "z_var", "status",
    )
    rows = []
    failures = 0
    for point, stats, mc, z_mean, z_var, ok in results:
        failures += 0 if ok else 1
        rows.append((
            point["process"], point["mu"], point["sigma"],
            point.get("beta", ""), point.get("beta1", ""), point.get("beta2", ""),
            mc.t_burn, stats.mean, stats.variance, mc.mean, mc.variance,
            mc.se_mean, mc.se_variance, z_mean, z_var, "pass" if ok else "fail",
        ))
        if point["process"] == "S" and point.get("beta2") == 0.95:
            coef = (1 - 0.95) / (1 + 0.95)
            print(f"S beta2=0.95 stationary variance coefficient: {coef:.6f}")
    write_table(os.path.join(out, "ema.csv"), columns, rows)
    fail_fraction = failures / len(results)
    _write_json(
        os.path.join(out, "summary.json"),
        {"points": len(results), "failures": failures, "fail_fraction": fail_fraction,
         "samples": samples, "seed": base_seed},
    )
    return 1 if fail_fraction > cfg["max_fail_fraction"] else 0


def _objective_from(section: dict) -> theory.Objective:
    if section["kind"] == "cosh":
        return theory.cosh_objective(section["dim"], section["a"], section["b"])
    return theory.quadratic_objective(section["dim"], section["curvature"])


def cmd_verify_theory(cfg: dict) -> int:
    out = _prepare_out(cfg, "verify-theory")
    obj = _objective_from(cfg["objective"])
    if cfg["negative_control"]:
        obj = theory.miscertified(obj)
    points = cfg["points"]
    rng = np.random.default_rng(cfg["seed"])
    suites: dict[str, tuple[int, int]] = {}

    # two-point certificate inequality on admissible random pairs
    fails = 0
    for _ in range(points):
        w1 = rng.uniform(-3.0, 3.0, obj.dim)
        direction = rng.normal(size=obj.dim)
        direction /= np.linalg.norm(direction)
        w2 = w1 + rng.uniform(0.0, 1.0 / obj.smoothness.L1) * direction
        res = theory.smoothness_probe(obj, w1, w2)
        if res.applicable and not res.holds:
            fails += 1
    suites["smoothness_probe"] = (points, fails)

    # gradient-vs-gap inequality
    fails = 0
    for _ in range(points):
        w = rng.uniform(-3.0, 3.0, obj.dim)
        gap = obj.value(w) - obj.f_star
        gn = float(np.linalg.norm(obj.gradient(w)))
        if not theory.reverse_pl_holds(gap, gn, obj.smoothness.L0, obj.smoothness.L1):
            fails += 1
    suites["reverse_pl"] = (points, fails)

    # safe-step no-increase
    fails = 0
    for _ in range(points):
        w = rng.uniform(-3.0, 3.0, obj.dim)
        g = obj.gradient(w)
        lr = 0.999 * theory.descent_max_lr(
            obj.smoothness.L0, obj.smoothness.L1, float(np.linalg.norm(g))
        )
        if obj.value(w - lr * g) > obj.value(w):
            fails += 1
    suites["descent_bound"] = (points, fails)

    # every actual decay-free step stays under the provable cap
    hp = optim.HyperParams(weight_decay=0.0, peak_lr=1e-2, clip_threshold=None)
    w = Tensor(obj.default_start)
    state = optim.init_state("adams", w.shape)
    noise = theory.NoiseSpec(cfg["noise_r"])
    fails = 0
    for _ in range(cfg["bound_steps"]):
        g = Tensor._adopt(
            obj.gradient(w.as_array()) + theory.subgaussian_noise(obj.dim, noise.R, rng).data,
            w.shape,
        )
        w_new, state = optim.adams_step(w, g, state, hp, hp.peak_lr)
        if float(np.linalg.norm(w_new.data - w.data)) > optim.update_norm_bound_tight(
            hp, hp.peak_lr, obj.dim
        ) + 1e-12:
            fails += 1
        w = w_new
    suites["bounded_update"] = (cfg["bound_steps"], fails)

    # noise-norm tail against the declared envelope
    draws = cfg["noise_draws"]
    sample = np.vstack(
        [theory.subgaussian_noise(obj.dim, noise.R, rng).data for _ in range(draws)]
    )
    norms = np.linalg.norm(sample, axis=1)
    fails = 0
    checks = 0
    for mult in (1.0, 2.0, 3.0):
        s = mult * noise.R
        empirical = float(np.mean(norms >= s))
        bound = 2.0 * math.exp(-s * s / (2.0 * noise.R**2))
        checks += 1
        if empirical > bound:
            fails += 1
    suites["noise_tail"] = (checks, fails)

    report = {
        "objective": obj.name,
        "negative_control": cfg["negative_control"],
        "suites": {
            name: {"checked": n, "failures": f, "passed": f == 0}
            for name, (n, f) in suites.items()
        },
    }
    _write_json(os.path.join(out, "report.json"), report)
    any_fail = any(f > 0 for _, f in suites.values())
    for name, (n, f) in suites.items():
        print(f"{name}: {n - f}/{n} ok")
    return 1 if any_fail else 0


def cmd_compare_updates(cfg: dict) -> int:
    out = _prepare_out(cfg, "compare-updates")
    model_cfg = _model_config(cfg["model"])
    _, tokens, _ = _corpus_tokens(cfg["corpus"], model_cfg)
    model = models.TinyLM.init(cfg["model_seed"], model_cfg)
    record = analysis.shadow_compare(
        cfg["driver"]["kind"],
        cfg["shadow"]["kind"],
        model,
        tokens,
        cfg["steps"],
        _hyperparams(cfg["driver"]),
        _schedule(cfg["schedule"]),
        cfg["batch_size"],
        cfg["seed"],
        shadow_hp=_hyperparams(cfg["shadow"]),
    )
    record.write_csv(os.path.join(out, "similarity.csv"))
    summary = {
        "driver": cfg["driver"]["kind"],
        "shadow": cfg["shadow"]["kind"],
        "steps_run": len(record),
        "diverged": record.flags["diverged"],
        "first_step_cos_global": record.column("cos_global")[0] if len(record) else None,
        "mean_cos_global": analysis.mean_cosine(record, skip=min(cfg["skip_steps"], max(len(record) - 1, 0))),
        "seed": cfg["seed"],
    }
    _write_json(os.path.join(out, "summary.json"), summary)
    return 3 if record.flags["diverged"] else 0


def cmd_sweep(cfg: dict) -> int:
    out = _prepare_out(cfg, "sweep")
    cells = [(b1, b2) for b1 in cfg["beta1_grid"] for b2 in cfg["beta2_grid"]]

    def one(cell):
        beta1, beta2 = cell
        section = dict(cfg["optimizer"], beta1=beta1, beta2=beta2)
        result = _run_train(cfg, section, cfg["seed"])
        return result.summary

    summaries = _map_ordered(one, cells, cfg["threads"])
    finite = [s["final_val_loss"] for s in summaries if not s["diverged"]]
    best = min(finite) if finite else math.nan
    rows = []
    for (beta1, beta2), s in zip(cells, summaries):
        if s["diverged"]:
            flag = "diverged"
        elif finite and s["final_val_loss"] > 1.1 * best:
            flag = "outlier"
        else:
            flag = "ok"
        rows.append((beta1, beta2, s["final_val_loss"], s["final_train_loss"],
                     s["steps_run"], flag))
    write_table(
        os.path.join(out, "sweep.csv"),
        ("beta1", "beta2", "val_loss", "train_loss", "steps_run", "flag"),
        rows,
    )
    _write_json(
        os.path.join(out, "summary.json"),
        {"cells": len(cells), "best_val_loss": best,
         "flags": {f"{b1}/{b2}": row[5] for (b1, b2), row in zip(cells, rows)}},
    )
    return 0


COMMANDS = {
    "train": cmd_train,
    "simulate-ema": cmd_simulate_ema,
    "verify-theory": cmd_verify_theory,
    "compare-updates": cmd_compare_updates,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adams",
        description="Optimizer experiments: training, moment simulation, "
        "inequality suites, update comparison, and beta sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config path")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--threads", type=int, default=None, help="worker pool size")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "out_dir": args.out, "threads": args.threads}
    try:
        cfg = cfgmod.load(args.command, args.config, overrides)
    except cfgmod.ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    started = time.monotonic()
    code = COMMANDS[args.command](cfg)
    print(f"{args.command}: exit {code} in {time.monotonic() - started:.1f}s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

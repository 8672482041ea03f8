"""Command-line entry point ``reludae``.

Every command prints one summary line and writes its artifacts under
``--out``. Exit codes: 0 on success, 2 for invalid input, 3 for numeric
failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import io
from .analysis import assign_blocks, endomorphism_compare, jacobian_svd_report, match_columns, max_train_cosine
from .closed_form import (
    construct_hybrid_solution,
    construct_memorization_solution,
    construct_theorem_solution,
    memorization_loss_value,
    wiener_limit,
)
from .data import check_separability, compute_margin, duplicate_cluster, mog_spec, sample_mog
from .detection import auroc, calibrate, detection_scores, tpr_at_fpr
from .exceptions import ConfigurationError
from .sampler import DenoiserBank, one_step_denoise, sample, ve_schedule
from .steering import bank_steering_vectors, steering_sweep
from .trainer import OptimizerConfig, train

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


def _section(cfg, name):
    return dict(cfg.get(name, {})) if cfg else {}


def _pick(flag, section, key, default=None):
    """Flag beats config beats default."""
    if flag is not None:
        return flag
    return section.get(key, default)


def _out(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _data(args):
    if not args.data:
        raise ConfigurationError("--data is required")
    return io.read_dataset(args.data, args.labels)


def _int_list(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _float_list(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _schedule(args, cfg):
    sec = _section(cfg, "schedule")
    smin = _pick(args.sigma_min, sec, "sigma_min", 0.02)
    smax = _pick(args.sigma_max, sec, "sigma_max", 20.0)
    T = _pick(args.T, sec, "T", 40)
    n = _pick(args.n_samples, sec, "n_samples", 100)
    seed = _pick(args.seed, sec, "seed", 0)
    return ve_schedule(smin, smax, T), n, seed


def _bank(args, schedule, data):
    """Checkpoints from --bank DIR, or closed-form solutions at every schedule level."""
    if args.bank:
        paths = sorted(Path(args.bank).glob("*.dae"))
        if not paths:
            raise ConfigurationError(f"no .dae checkpoints in {args.bank}")
        return DenoiserBank([(m.sigma_train, m) for m, _ in map(io.read_checkpoint, paths)])
    if data is None:
        raise ConfigurationError("closed-form banks need --data")
    lam = args.lam or 0.0
    levels = schedule.sigmas[:-1]
    if args.construct == "memorization":
        p = args.p or data.n
        return DenoiserBank.from_builder(levels, lambda s: construct_memorization_solution(data, p, s, lam))
    if args.construct == "theorem":
        if not args.p_alloc:
            raise ConfigurationError("--p-alloc is required for theorem banks")
        alloc = _int_list(args.p_alloc)
        return DenoiserBank.from_builder(
            levels, lambda s: construct_theorem_solution(data, alloc, s, lam).to_model()
        )
    raise ConfigurationError("pass --bank DIR or --construct {memorization,theorem}")


def cmd_gen_data(args, cfg):
    sec = _section(cfg, "data")
    K = _pick(args.K, sec, "K", 2)
    d = _pick(args.d, sec, "d", 1000)
    seed = _pick(args.seed, sec, "seed", 0)
    n_per = _pick(args.n_per_mode, sec, "n_per_mode", 5000)
    counts = list(n_per) if isinstance(n_per, list) else [int(n_per)] * K
    spec = mog_spec(
        K=K, d=d,
        radius=_pick(args.radius, sec, "radius", 5.0),
        tau=_pick(args.tau, sec, "tau", 0.5),
        cov_scale=_pick(args.cov_scale, sec, "cov_scale", 1.0),
    )
    data = sample_mog(spec, counts, seed)
    dup = sec.get("duplicate")
    if dup:
        data = duplicate_cluster(data, dup["source_index"], dup["copies"])
    out = _out(args)
    io.write_dataset(out, data)
    shape = sec.get("image_shape")
    if shape:
        io.write_pgm_grid(out / "data_grid.pgm", data.X[:, :100], shape[0], shape[1])
    rep = check_separability(data)
    return f"n={data.n} d={data.d} alpha={rep.alpha:.2f} beta={rep.beta:.2f}"


def cmd_train(args, cfg):
    sec = _section(cfg, "train")
    data = _data(args)
    keys = ("kind", "lr", "weight_decay", "steps", "batch", "seed", "beta1", "beta2", "eps",
            "tied", "init_scale", "log_every")
    flags = {"kind": args.optimizer, "lr": args.lr, "weight_decay": args.weight_decay,
             "steps": args.steps, "batch": args.batch, "seed": args.seed}
    kw = {}
    for k in keys:
        v = _pick(flags.get(k), sec, k)
        if v is not None:
            kw[k] = v
    ocfg = OptimizerConfig(**kw)
    p = _pick(args.p, sec, "p", 8)
    sigma = _pick(args.sigma, sec, "sigma", 0.2)
    every = _pick(args.checkpoint_every, sec, "checkpoint_every", 0)
    out = _out(args)
    digest = io.dataset_hash(data.X)
    meta = {"optimizer": ocfg.to_dict(), "dataset_sha256": digest, "p": p}

    def checkpoint(step, m):
        io.write_checkpoint(out / f"ckpt_{step:08d}.dae", m, {**meta, "steps": step})

    trace = train(data, sigma, p, ocfg, callback=checkpoint, checkpoint_every=every)
    io.write_checkpoint(out / "model.dae", trace.final_model, {**meta, "steps": ocfg.steps})
    io.write_csv(out / "trace.csv", ["step", "loss", "grad_norm"],
                 zip(trace.steps_logged.tolist(), trace.loss_history.tolist(), trace.grad_norm_history.tolist()))
    return f"steps={ocfg.steps} final_loss={trace.loss_history[-1]:.6g} p={p} sigma={sigma:g}"


def cmd_construct(args, cfg):
    sec = _section(cfg, "train")
    data = _data(args)
    sigma = _pick(args.sigma, sec, "sigma", 0.2)
    lam = _pick(args.lam, sec, "weight_decay", 0.0)
    out = _out(args)
    meta = {"construction": args.mode, "dataset_sha256": io.dataset_hash(data.X), "lambda": lam}
    if args.mode == "memorization":
        p = _pick(args.p, sec, "p", data.n)
        m = construct_memorization_solution(data, p, sigma, lam)
    else:
        alloc = _int_list(args.p_alloc) if args.p_alloc else sec.get("p_alloc")
        if not alloc:
            raise ConfigurationError("--p-alloc is required for block constructions")
        build = construct_theorem_solution if args.mode == "theorem" else construct_hybrid_solution
        sol = build(data, alloc, sigma, lam)
        m = sol.to_model()
        io.write_json(out / "blocks.json", sol.sidecar())
    io.write_checkpoint(out / "model.dae", m, meta)
    return f"mode={args.mode} d={m.d} p={m.p} sigma={sigma:g}"


def cmd_compare(args, cfg):
    data = _data(args)
    m, meta = io.read_checkpoint(args.model)
    out = _out(args)
    target = io.read_checkpoint(args.reference)[0].W1 if args.reference else data.X
    rep = match_columns(m.W1, target)
    io.write_csv(out / "match.csv", ["learned", "target", "cosine"],
                 [(j, t, c) for (j, t), c in zip(rep.assignment.items(), rep.cosines.tolist())])
    lam = args.lam if args.lam is not None else meta.get("optimizer", {}).get("weight_decay", 0.0)
    blocks = assign_blocks(m, data)
    rows, curves = [], []
    for k, cols in blocks.items():
        if cols.size == 0:
            rows.append((k, 0, float("nan")))
            continue
        Xk = data.cluster(k)
        S = Xk @ Xk.T / Xk.shape[1]
        ref = wiener_limit(S, cols.size, m.sigma_train, lam, Xk.shape[1] / data.n)
        cmp = endomorphism_compare(m.W2[:, cols] @ m.W1[:, cols].T, ref)
        rows.append((k, int(cols.size), cmp.rel_frob_error))
        curves.extend((k, i, float(a), float(b)) for i, (a, b) in enumerate(cmp.eig_curve_pairs[: args.k]))
    io.write_csv(out / "compare.csv", ["label", "p_k", "rel_frob_error"], rows)
    io.write_csv(out / "eigcurves.csv", ["label", "index", "learned", "target"], curves)
    errs = [r[2] for r in rows if np.isfinite(r[2])]
    worst = max(errs) if errs else float("nan")
    return f"min_cos={rep.min_cosine:.4f} max_rel_err={worst:.4f} blocks={[r[1] for r in rows]}"


def cmd_sample(args, cfg):
    schedule, n, seed = _schedule(args, cfg)
    data = io.read_dataset(args.data, args.labels) if args.data else None
    bank = _bank(args, schedule, data)
    d = bank.denoisers[0].d
    S = sample(bank, schedule, n, seed, d=d)
    out = _out(args)
    io.write_dmx(out / "samples.dmx", S)
    summary = f"n_samples={n} T={schedule.n_steps}"
    if data is not None:
        cos, idx = max_train_cosine(S, data)
        io.write_csv(out / "max_cos.csv", ["sample", "max_cos", "train_index"],
                     zip(range(n), cos.tolist(), idx.tolist()))
        summary += f" frac_cos_ge_0.99={np.mean(cos >= 0.99):.2f}"
    shape = _section(cfg, "data").get("image_shape")
    if shape:
        io.write_pgm_grid(out / "samples_grid.pgm", S, shape[0], shape[1])
    return summary


def cmd_denoise(args, cfg):
    data = _data(args)
    m, _ = io.read_checkpoint(args.model)
    sigma = args.sigma if args.sigma is not None else m.sigma_train
    seed = args.seed or 0
    rows = []
    for i in range(data.n):
        _, _, mse = one_step_denoise(m, data.X[:, i], sigma, [seed, i])
        rows.append((i, mse))
    out = _out(args)
    io.write_csv(out / "denoise.csv", ["sample", "mse"], rows)
    return f"n={data.n} sigma={sigma:g} mean_mse={np.mean([r[1] for r in rows]):.6g}"


def cmd_detect(args, cfg):
    sec = _section(cfg, "detect")
    stat = _pick(args.stat, sec, "stat", "std")
    sigma = _pick(args.sigma, sec, "sigma", 0.17)
    seed = _pick(args.seed, sec, "seed", 0)
    mem_m, _ = io.read_checkpoint(args.mem_model)
    gen_m, _ = io.read_checkpoint(args.gen_model)
    mem_X = io.read_dmx(args.mem_data)
    gen_X = io.read_dmx(args.gen_data)
    if args.n:
        mem_X = mem_X[:, np.arange(args.n) % mem_X.shape[1]]
        gen_X = gen_X[:, : args.n]
    pos = detection_scores(mem_m, mem_X, sigma, stat, seed)
    neg = detection_scores(gen_m, gen_X, sigma, stat, seed + 1)
    thr = _pick(args.threshold, sec, "threshold")
    if thr is None:
        thr = calibrate(pos, neg)
    out = _out(args)
    rows = [(i, s, 1, bool(s > thr)) for i, s in enumerate(pos.tolist())]
    rows += [(pos.size + i, s, 0, bool(s > thr)) for i, s in enumerate(neg.tolist())]
    io.write_csv(out / "scores.csv", ["sample_id", "score", "label", "flag"], rows)
    metrics = {"auc": auroc(pos, neg), "tpr_at_1fpr": tpr_at_fpr(pos, neg, 0.01),
               "threshold": float(thr), "n_pos": int(pos.size), "n_neg": int(neg.size), "stat": stat}
    io.write_json(out / "metrics.json", metrics)
    return f"stat={stat} auc={metrics['auc']:.4f} tpr_at_1fpr={metrics['tpr_at_1fpr']:.4f}"


def cmd_steer(args, cfg):
    sec = _section(cfg, "steer")
    schedule, n, seed = _schedule(args, cfg)
    data = _data(args)
    bank = _bank(args, schedule, data)
    src = _pick(args.source_label, sec, "source_label", 1)
    tgt = _pick(args.target_label, sec, "target_label", 2)
    grid = _float_list(args.a_grid) if args.a_grid else sec.get("a_grid", [0.25 * i for i in range(7)])
    window = tuple(_int_list(args.window)) if args.window else sec.get("window")
    n = _pick(args.n, sec, "n", n)
    seed = _pick(args.seed, sec, "seed", seed)
    svs = bank_steering_vectors(bank, data.cluster(tgt), seed, tgt)
    means = data.cluster_means().T
    rows = steering_sweep(bank, schedule, svs, grid, means, src - 1, tgt - 1, n=n, seed=seed, window=window)
    out = _out(args)
    io.write_csv(out / "sweep.csv", ["a", "mode2_fraction", "mean_cosine_to_mu2"], rows)
    frac = [r.mode2_fraction for r in rows]
    jump = max(np.diff(frac)) if len(frac) > 1 else 0.0
    return f"points={len(rows)} rise={frac[-1] - frac[0]:.2f} max_jump={jump:.2f}"


def cmd_jacobian(args, cfg):
    data = _data(args)
    m, _ = io.read_checkpoint(args.model)
    x = data.X[:, args.index]
    k = min(args.k, m.d)
    label = int(data.cluster_ids[args.index])
    rep = jacobian_svd_report(m, x, k, data.cluster(label).mean(axis=1))
    out = _out(args)
    io.write_csv(out / "jacobian.csv", ["rank", "singular_value"], enumerate(rep.singular_values.tolist(), 1))
    return f"index={args.index} s2/s1={rep.rank_ratio:.4g} cos_top_x={rep.cos_top_to_x:.4f}"


def cmd_report(args, cfg):
    data = _data(args)
    sigma = args.sigma if args.sigma is not None else 0.2
    rep = check_separability(data)
    doc = {
        "n": data.n, "d": data.d, "clusters": data.M,
        "cluster_sizes": data.cluster_sizes.tolist(),
        "alpha": rep.alpha, "beta": rep.beta, "separable": rep.is_separable,
        "sigma": sigma, "memorization_loss": memorization_loss_value(data, sigma),
    }
    if args.p_alloc and rep.is_separable:
        sol = construct_theorem_solution(data, _int_list(args.p_alloc), sigma, args.lam or 0.0)
        s = np.concatenate([b.scaling for b in sol.blocks])
        try:
            margin = compute_margin(data, s.min(), s.max(), sol.p_alloc)
            doc["margin"] = margin.gamma
        except ValueError as exc:
            doc["margin_error"] = str(exc)
    out = _out(args)
    io.write_json(out / "report.json", doc)
    return f"n={data.n} d={data.d} alpha={rep.alpha:.2f} beta={rep.beta:.2f} mem_loss={doc['memorization_loss']:.4g}"


COMMANDS = {
    "gen-data": cmd_gen_data, "train": cmd_train, "construct": cmd_construct, "compare": cmd_compare,
    "sample": cmd_sample, "denoise": cmd_denoise, "detect": cmd_detect, "steer": cmd_steer,
    "jacobian": cmd_jacobian, "report": cmd_report,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="reludae", description="ReLU denoising autoencoder experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", help="experiment config (JSON)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=None, help="cap BLAS threads")
        p.add_argument("--seed", type=int)
        if data:
            p.add_argument("--data", help="DMX1 data matrix (d x n)")
            p.add_argument("--labels", help="labels JSON (defaults to labels.json next to --data)")
        return p

    def schedule(p):
        p.add_argument("--sigma-min", type=float)
        p.add_argument("--sigma-max", type=float)
        p.add_argument("--T", type=int)
        p.add_argument("--n-samples", type=int)
        p.add_argument("--bank", help="directory of DAE1 checkpoints, one per noise level")
        p.add_argument("--construct", choices=["memorization", "theorem"])
        p.add_argument("--p", type=int)
        p.add_argument("--p-alloc", help="comma-separated block widths")
        p.add_argument("--lambda", dest="lam", type=float)

    p = common(sub.add_parser("gen-data", help="sample a Gaussian mixture"), data=False)
    p.add_argument("--K", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--n-per-mode", type=int)
    p.add_argument("--radius", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--cov-scale", type=float)

    p = common(sub.add_parser("train", help="train a DAE"))
    p.add_argument("--p", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--optimizer", choices=["rmsprop", "adam", "adamw"])
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--checkpoint-every", type=int)

    p = common(sub.add_parser("construct", help="build a closed-form solution"))
    p.add_argument("--mode", choices=["memorization", "theorem", "hybrid"], required=True)
    p.add_argument("--p", type=int)
    p.add_argument("--p-alloc")
    p.add_argument("--sigma", type=float)
    p.add_argument("--lambda", dest="lam", type=float)

    p = common(sub.add_parser("compare", help="compare a checkpoint with data or a reference"))
    p.add_argument("--model", required=True)
    p.add_argument("--reference")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--k", type=int, default=10, help="eigenvalues per block in eigcurves.csv")

    schedule(common(sub.add_parser("sample", help="DDIM sampling from a denoiser bank")))

    p = common(sub.add_parser("denoise", help="one-step denoising of every data column"))
    p.add_argument("--model", required=True)
    p.add_argument("--sigma", type=float)

    p = common(sub.add_parser("detect", help="memorization detection metrics"), data=False)
    p.add_argument("--mem-model", required=True)
    p.add_argument("--mem-data", required=True)
    p.add_argument("--gen-model", required=True)
    p.add_argument("--gen-data", required=True)
    p.add_argument("--stat", choices=["std", "l4l2", "entropy", "max_minus_min"])
    p.add_argument("--sigma", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--n", type=int, help="number of scores per class")

    p = common(sub.add_parser("steer", help="steering sweep"))
    schedule(p)
    p.add_argument("--source-label", type=int)
    p.add_argument("--target-label", type=int)
    p.add_argument("--a-grid", help="comma-separated strengths")
    p.add_argument("--window", help="start,stop step indices")
    p.add_argument("--n", type=int)

    p = common(sub.add_parser("jacobian", help="Jacobian SVD at one data column"))
    p.add_argument("--model", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--k", type=int, default=5)

    p = common(sub.add_parser("report", help="separability, margin and loss summary"))
    p.add_argument("--sigma", type=float)
    p.add_argument("--p-alloc")
    p.add_argument("--lambda", dest="lam", type=float)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = io.load_config(args.config) if args.config else {}
        with threadpool_limits(limits=args.threads):
            line = COMMANDS[args.command](args, cfg)
    except ArithmeticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, KeyError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(line)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line orchestration.

Subcommands: train, sample, eval, sweep, compose, plot. Every command honors
--seed and reads entropy only through seeded generators. Exit codes: 0 on
success, 1 on validation errors, 2 on numerical failures.

The default output directory comes from $EQMATCH_OUT (falling back to the
current directory) whenever a command does not pass one explicitly.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, CheckpointError, load_checkpoint
from .config import RunConfig, ValidationError, load_config
from .data import FLOAT_FMT, draw_from, load_points_csv, ood_sets, sample_noise
from .evaluation import (DEFAULT_BANDWIDTHS, EvalReport, QuadraticEnergy,
                         append_reports, auroc, component_energy,
                         config_fingerprint, convergence_bound_check,
                         grad_norm_at_data, ledger_has, local_minima_membership,
                         mmd, mmd_permutation_null, mode_coverage,
                         nearest_neighbor_audit, partial_noise_sweep)
from .model import energy
from .ndtensor import NonFiniteError
from .plotting import (PLOT_KINDS, PlotError, contour_svg, curves_svg,
                       histogram_svg, scatter_svg, vector_field_svg)
from .sampler import (FunctionField, ModelField, SamplerConfig, compose,
                      sample, save_trajectory_csv)
from .training import train

ENV_OUT_DIR = "EQMATCH_OUT"
SUITES = ("statements", "quality", "ood", "partial-noise", "nn-audit")
SWEEP_AXES = ("eta", "mu", "steps", "g-min", "lambda", "schedule")


def _default_out_dir() -> Path:
    return Path(os.environ.get(ENV_OUT_DIR, "."))


def field_for_checkpoint(ck: Checkpoint, label=None) -> ModelField:
    """Velocity-matching baselines predict the data-ward velocity; negate so
    the shared descent loop drives them too."""
    negate = ck.config.objective in ("fm", "uncond-fm")
    return ModelField(ck.model, label=label, negate=negate)


def _sampler_from_args(base: SamplerConfig, args) -> SamplerConfig:
    fields = {}
    for name, attr in (("method", "method"), ("eta", "eta"), ("mu", "mu"),
                       ("steps", "steps"), ("g_min", "g_min"),
                       ("max_steps", "max_steps")):
        value = getattr(args, attr, None)
        if value is not None:
            fields[name] = value
    if fields.get("method") == "adaptive" and "g_min" not in fields and base.g_min is None:
        raise ValidationError("adaptive sampling needs --g-min")
    if fields.get("method", base.method) != "adaptive":
        fields.setdefault("g_min", None)
    try:
        return replace(base, **fields)
    except ValueError as e:
        raise ValidationError(str(e)) from e


def _write_samples_csv(path, traj) -> None:
    d = traj.final.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", *[f"x{i}" for i in range(d)], "steps_used",
                    "cap_reached"])
        for i, row in enumerate(traj.final):
            w.writerow([i, *[FLOAT_FMT % v for v in row], int(traj.steps_used[i]),
                        int(traj.cap_reached[i])])


def _read_samples_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        pts, steps = [], []
        for row in reader:
            pts.append([float(v) for k, v in row.items() if k.startswith("x")])
            if "steps_used" in row:
                steps.append(int(row["steps_used"]))
    return np.asarray(pts, dtype=np.float64), (np.asarray(steps) if steps else None)


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    config = load_config(args.config) if args.config else None
    out_dir = args.out or (config.out_dir if config and config.out_dir else None) \
        or _default_out_dir() / "run"
    result = train(config, out_dir=out_dir, init_from=args.init_from,
                   resume_from=args.resume, quiet=not args.verbose)
    print(f"trained {result.config.objective} for {result.config.train.steps} steps; "
          f"final loss {result.losses[-1]:.6f}; checkpoint {result.checkpoint_path}")
    return 0


def cmd_sample(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    config = _sampler_from_args(ck.config.sampler, args)
    field = field_for_checkpoint(ck, label=args.label)
    if args.start_csv:
        x0, _ = load_points_csv(args.start_csv)
    else:
        x0 = sample_noise(args.n, ck.config.model.input_dim, args.seed)
    record = args.trajectory is not None
    traj = sample(field, x0, config, record=record)
    out = Path(args.out) if args.out else _default_out_dir() / "samples.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_samples_csv(out, traj)
    if record:
        save_trajectory_csv(args.trajectory, traj)
    print(f"wrote {len(traj.final)} samples to {out} "
          f"(mean steps {traj.steps_used.mean():.1f})")
    return 0


def _suite_statements(args, out_dir: Path) -> list[EvalReport]:
    fp = config_fingerprint({"suite": "statements", "seed": args.seed})
    quad = QuadraticEnergy(np.diag([1.0, 4.0]))
    rng = np.random.default_rng(args.seed)
    x0s = 3.0 * rng.standard_normal((50, 2))
    reports = []
    for eta_frac in (0.1, 0.5, 1.0):
        res = convergence_bound_check(quad, eta_frac / quad.L, [1, 10, 100, 1000], x0s)
        reports.append(EvalReport(f"statement3-pass-eta{eta_frac}", float(res.passed),
                                  fp, args.seed, aux={"worst_slack": res.worst_slack}))
    anchors = 3.0 * np.stack([np.cos(np.arange(4) * np.pi / 2),
                              np.sin(np.arange(4) * np.pi / 2)], axis=1)

    def anchor_field(x):
        d = ((x[:, None, :] - anchors[None, :, :]) ** 2).sum(axis=2)
        return x - anchors[np.argmin(d, axis=1)]

    stats = grad_norm_at_data(FunctionField(anchor_field), anchors)
    reports.append(EvalReport("statement1-analytic-mean-grad-at-data",
                              stats["at_data"].mean, fp, args.seed))
    frac = local_minima_membership(
        FunctionField(anchor_field), anchors, n_inits=256, radius=0.25,
        config=SamplerConfig(method="adaptive", eta=0.2, g_min=1e-6, max_steps=500),
        seed=args.seed)
    reports.append(EvalReport("statement2-analytic-membership", frac, fp, args.seed))
    return reports


def _quality_reports(ck: Checkpoint, fp: str, seed: int, n: int,
                     sampler_cfg: SamplerConfig) -> list[EvalReport]:
    dist = ck.config.dataset.distribution()
    reference, _ = draw_from(dist, n, np.random.default_rng(seed + 1))
    x0 = sample_noise(n, ck.config.model.input_dim, seed)
    final = sample(field_for_checkpoint(ck), x0, sampler_cfg).final
    observed = mmd(final, reference)
    null = mmd_permutation_null(final, reference, n_permutations=100, seed=seed)
    reports = [
        EvalReport("mmd", max(0.0, observed), fp, seed,
                   aux={"raw": observed, "n": n}),
        EvalReport("mmd-null-p99", float(np.percentile(null, 99)), fp, seed),
    ]
    if dist.kind == "gaussian-mixture":
        radius = 3.0 * float(np.max(dist.mode_std))
        covered, in_mode = mode_coverage(final, dist.modes, radius)
        reports.append(EvalReport("covered-mode-fraction", covered, fp, seed,
                                  aux={"radius": radius}))
        reports.append(EvalReport("in-mode-sample-fraction", in_mode, fp, seed))
    return reports


def _suite_quality(args, ck: Checkpoint, out_dir: Path) -> list[EvalReport]:
    fp = config_fingerprint({"suite": "quality", "ckpt": _file_digest(args.checkpoint),
                             "seed": args.seed, "n": args.n,
                             "sampler": ck.config.sampler.to_dict()})
    return _quality_reports(ck, fp, args.seed, args.n, ck.config.sampler)


def _suite_ood(args, ck: Checkpoint, out_dir: Path) -> list[EvalReport]:
    if ck.config.model.energy_kind == "none":
        raise ValidationError("the ood suite needs an explicit-energy checkpoint")
    fp = config_fingerprint({"suite": "ood", "ckpt": _file_digest(args.checkpoint),
                             "seed": args.seed, "n": args.n})
    dist = ck.config.dataset.distribution()
    id_points, _ = draw_from(dist, args.n, np.random.default_rng(args.seed + 1))
    scores_id = energy(ck.model, id_points)
    reports = []
    for name, pts in ood_sets(dist, args.n, args.seed).items():
        scores_ood = energy(ck.model, pts)
        reports.append(EvalReport(f"auroc-{name}", auroc(scores_id, scores_ood),
                                  fp, args.seed,
                                  aux={"id_mean_energy": float(scores_id.mean()),
                                       "ood_mean_energy": float(scores_ood.mean())}))
    return reports


def _suite_partial_noise(args, ck: Checkpoint, out_dir: Path) -> list[EvalReport]:
    if not args.baseline:
        raise ValidationError("the partial-noise suite needs --baseline "
                              "(an unconditional velocity-matching checkpoint)")
    base = load_checkpoint(args.baseline)
    fp = config_fingerprint({"suite": "partial-noise",
                             "ckpt": _file_digest(args.checkpoint),
                             "baseline": _file_digest(args.baseline),
                             "seed": args.seed, "n": args.n})
    dist = ck.config.dataset.distribution()
    rng = np.random.default_rng(args.seed + 2)
    holdout, _ = draw_from(dist, args.n, rng)
    reference, _ = draw_from(dist, args.n, rng)
    gammas = [0.0, 0.5, 0.8]
    curves = partial_noise_sweep(field_for_checkpoint(ck), field_for_checkpoint(base),
                                 gammas, ck.config.sampler, holdout, reference,
                                 seed=args.seed)
    path = out_dir / "partial-noise-curves.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gamma", "model", "baseline"])
        for g, mv, bv in zip(curves["gamma"], curves["model"], curves["baseline"]):
            w.writerow([FLOAT_FMT % g, FLOAT_FMT % mv, FLOAT_FMT % bv])
    reports = []
    for g, mv, bv in zip(curves["gamma"], curves["model"], curves["baseline"]):
        reports.append(EvalReport(f"mmd-start-gamma-{g}-model", mv, fp, args.seed))
        reports.append(EvalReport(f"mmd-start-gamma-{g}-baseline", bv, fp, args.seed))
    return reports


def _suite_nn_audit(args, ck: Checkpoint, out_dir: Path) -> list[EvalReport]:
    fp = config_fingerprint({"suite": "nn-audit", "ckpt": _file_digest(args.checkpoint),
                             "seed": args.seed, "n": args.n})
    if ck.config.dataset.kind == "memorization":
        train_set = ck.config.dataset.memorization_points()
    else:
        train_set, _ = draw_from(ck.config.dataset.distribution(), args.n,
                                 np.random.default_rng(args.seed + 1))
    x0 = sample_noise(args.n, ck.config.model.input_dim, args.seed)
    final = sample(field_for_checkpoint(ck), x0, ck.config.sampler).final
    k = min(3, len(train_set))
    dists = nearest_neighbor_audit(final, train_set, k=k)
    return [EvalReport("nn-top1-mean-sqdist", float(dists[:, 0].mean()), fp, args.seed,
                       aux={"k": k, "top1_min": float(dists[:, 0].min()),
                            "top1_max": float(dists[:, 0].max())})]


def cmd_eval(args) -> int:
    out_dir = Path(args.out_dir) if args.out_dir else _default_out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    ledger = out_dir / "results.csv"
    if args.suite == "statements":
        reports = _suite_statements(args, out_dir)
    else:
        ck = load_checkpoint(args.checkpoint)
        fn = {"quality": _suite_quality, "ood": _suite_ood,
              "partial-noise": _suite_partial_noise, "nn-audit": _suite_nn_audit}[args.suite]
        reports = fn(args, ck, out_dir)
    if reports and ledger_has(ledger, reports[0].fingerprint) and not args.force:
        print(f"fingerprint {reports[0].fingerprint} already in {ledger}; "
              "skipping (use --force to re-run)")
        return 0
    append_reports(ledger, reports)
    for r in reports:
        print(f"{r.metric}: {r.value:.6g}")
    print(f"appended {len(reports)} rows to {ledger}")
    return 0


SWEEP_HEADER = ["axis", "value", "objective", "schedule", "lambda", "method",
                "eta", "mu", "steps", "g_min", "seed", "mmd", "covered_modes",
                "in_mode_fraction"]


def _sweep_row(axis, value, config: RunConfig, sampler_cfg: SamplerConfig,
               ck_model, seed: int, n: int) -> list:
    dist = config.dataset.distribution()
    reference, _ = draw_from(dist, n, np.random.default_rng(seed + 1))
    x0 = sample_noise(n, config.model.input_dim, seed)
    negate = config.objective in ("fm", "uncond-fm")
    final = sample(ModelField(ck_model, negate=negate), x0, sampler_cfg).final
    quality = max(0.0, mmd(final, reference))
    if dist.kind == "gaussian-mixture":
        radius = 3.0 * float(np.max(dist.mode_std))
        covered, in_mode = mode_coverage(final, dist.modes, radius)
    else:
        covered = in_mode = float("nan")
    return [axis, value, config.objective, config.schedule.kind,
            config.schedule.lam, sampler_cfg.method, sampler_cfg.eta,
            sampler_cfg.mu, sampler_cfg.steps, sampler_cfg.g_min, seed,
            FLOAT_FMT % quality, covered, in_mode]


def cmd_sweep(args) -> int:
    out_dir = Path(args.out_dir) if args.out_dir else _default_out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ValidationError("--values is empty")
    rows = []
    if args.axis in ("eta", "mu", "steps", "g-min"):
        if not args.checkpoint:
            raise ValidationError(f"axis '{args.axis}' sweeps a checkpoint; "
                                  "pass --checkpoint")
        ck = load_checkpoint(args.checkpoint)
        for raw in values:
            if args.axis == "steps":
                cfg = replace(ck.config.sampler, steps=int(raw))
            elif args.axis == "g-min":
                cfg = replace(ck.config.sampler, method="adaptive", g_min=float(raw))
            else:
                cfg = replace(ck.config.sampler, **{args.axis: float(raw)})
            rows.append(_sweep_row(args.axis, raw, ck.config, cfg, ck.model,
                                   args.seed, args.n))
    elif args.axis in ("lambda", "schedule"):
        if not args.config:
            raise ValidationError(f"axis '{args.axis}' retrains per value; pass --config")
        base = load_config(args.config)
        for raw in values:
            if args.axis == "lambda":
                sched = replace(base.schedule, lam=float(raw))
                cfg = replace(base, schedule=sched)
            else:
                cfg = replace(base, schedule=replace(base.schedule, kind=raw),
                              allow_non_equilibrium=(raw == "constant"))
            result = train(cfg, out_dir=None)
            rows.append(_sweep_row(args.axis, raw, cfg, cfg.sampler, result.model,
                                   args.seed, args.n))
    else:
        raise ValidationError(f"unknown sweep axis '{args.axis}' "
                              f"(expected one of {SWEEP_AXES})")
    path = out_dir / f"sweep-{args.axis}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_HEADER)
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {path}")
    return 0


def cmd_compose(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    if ck.config.model.num_classes == 0:
        raise ValidationError("compose needs a class-conditional checkpoint")
    field = compose([ck.model, ck.model], labels=[args.label1, args.label2])
    config = _sampler_from_args(ck.config.sampler, args)
    x0 = sample_noise(args.n, ck.config.model.input_dim, args.seed)
    traj = sample(field, x0, config)
    out = Path(args.out) if args.out else _default_out_dir() / "composed.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_samples_csv(out, traj)
    print(f"wrote {len(traj.final)} composed samples "
          f"(labels {args.label1}+{args.label2}) to {out}")
    return 0


def cmd_plot(args) -> int:
    out = Path(args.out) if args.out else _default_out_dir() / f"{args.kind}.svg"
    out.parent.mkdir(parents=True, exist_ok=True)
    bounds = tuple(float(v) for v in args.bounds.split(",")) if args.bounds else None
    if args.kind == "vector-field":
        ck = load_checkpoint(_require(args.checkpoint, "--checkpoint"))
        vector_field_svg(out, field_for_checkpoint(ck, label=args.label),
                         bounds=bounds or (-4.5, 4.5, -4.5, 4.5), grid=args.grid)
    elif args.kind == "scatter":
        pts, _ = _read_samples_csv(_require(args.samples, "--samples"))
        scatter_svg(out, pts, bounds=bounds)
    elif args.kind == "contour":
        ck = load_checkpoint(_require(args.checkpoint, "--checkpoint"))
        contour_svg(out, ck.model, bounds=bounds or (-4.5, 4.5, -4.5, 4.5),
                    label=args.label)
    elif args.kind == "step-hist":
        _, steps = _read_samples_csv(_require(args.samples, "--samples"))
        if steps is None:
            raise ValidationError("samples file has no steps_used column")
        histogram_svg(out, steps, title="sampling steps per sample")
    elif args.kind == "gamma-curves":
        path = _require(args.curves, "--curves")
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        x = np.array([float(r["gamma"]) for r in rows])
        series = {k: np.array([float(r[k]) for r in rows])
                  for k in rows[0] if k != "gamma"}
        curves_svg(out, x, series, title="quality vs start noise")
    else:
        raise ValidationError(f"unknown plot kind '{args.kind}'")
    print(f"wrote {out}")
    return 0


def _require(value, flag: str):
    if value is None:
        raise ValidationError(f"this plot kind needs {flag}")
    return value


# ---------------------------------------------------------------------------
# parser


def _add_sampler_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=["gd", "nag", "euler-ode", "adaptive"])
    p.add_argument("--eta", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--g-min", dest="g_min", type=float)
    p.add_argument("--max-steps", dest="max_steps", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eqmatch",
                                     description="equilibrium gradient-field lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a JSON config")
    p.add_argument("--config", help="run config path (omit when resuming)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--init-from", help="warm-start parameters from a checkpoint")
    p.add_argument("--resume", help="resume an interrupted run exactly")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("sample", help="draw samples from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--label", type=int)
    p.add_argument("--out")
    p.add_argument("--trajectory", help="also record the full trajectory CSV")
    p.add_argument("--start-csv", dest="start_csv",
                   help="initialize from these points instead of noise")
    _add_sampler_flags(p)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("eval", help="run an evaluation suite into the ledger")
    p.add_argument("--suite", required=True, choices=SUITES)
    p.add_argument("--checkpoint")
    p.add_argument("--baseline", help="baseline checkpoint (partial-noise suite)")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="grid over a sampling or training axis")
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--checkpoint")
    p.add_argument("--config")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("compose", help="sample from two added conditional fields")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--label1", type=int, required=True)
    p.add_argument("--label2", type=int, required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    _add_sampler_flags(p)
    p.set_defaults(fn=cmd_compose)

    p = sub.add_parser("plot", help="emit a deterministic SVG")
    p.add_argument("--kind", required=True, choices=PLOT_KINDS)
    p.add_argument("--out")
    p.add_argument("--checkpoint")
    p.add_argument("--samples")
    p.add_argument("--curves")
    p.add_argument("--label", type=int)
    p.add_argument("--bounds", help="xmin,xmax,ymin,ymax")
    p.add_argument("--grid", type=int, default=40)
    p.set_defaults(fn=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except NonFiniteError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 2
    except (ValidationError, CheckpointError, PlotError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

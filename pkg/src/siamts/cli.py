"""Command-line interface.

Subcommands:
    synth      generate a synthetic corpus file
    run        run a configured experiment and write report.json / curves.csv
    sweep      compare extractor depth configurations by frozen-probe kappa
    gradcheck  verify analytic gradients against finite differences
    bench      time the compiled vs BLAS convolution backends

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, DataError, NumericError, ShapeError, SiamTSError


def _add_synth(sub):
    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True, help="output corpus path")
    p.add_argument("--users", type=int, default=10)
    p.add_argument("--sessions", type=int, default=8)
    p.add_argument("--session-len", type=int, default=300)
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--harmonics", type=int, default=2)
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--amp-sigma", type=float, default=0.15)
    p.add_argument("--offset", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)


def _add_run(sub):
    p = sub.add_parser("run", help="run an experiment")
    p.add_argument("--config", help="JSON run config; defaults apply without it")
    p.add_argument("--out", help="output directory (overrides config)")
    p.add_argument("--seed", type=int, help="base seed (overrides config)")
    p.add_argument("--runs", type=int, help="run count (overrides config)")
    p.add_argument("--profile", choices=("musicid", "mmi", "synth"),
                   help="dataset profile (overrides config)")
    p.add_argument("--corpus", help="corpus file (overrides config)")


def _add_sweep(sub):
    p = sub.add_parser("sweep", help="extractor depth sweep")
    p.add_argument("--config", help="JSON run config for data and schedules")
    p.add_argument("--filters", required=True,
                   help="configurations like '32;64;128,256' (semicolon-separated)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--per-user", type=int, help="probe windows per user")


def _add_gradcheck(sub):
    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.add_argument("--perturb", action="store_true",
                   help="corrupt one gradient on purpose to demonstrate detection")


def _add_bench(sub):
    p = sub.add_parser("bench", help="compare convolution backends")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)


def _load_run_config(args) -> "RunConfig":
    from .config import RunConfig

    cfg = RunConfig.from_json(args.config) if args.config else RunConfig()
    updates = {}
    if getattr(args, "out", None):
        updates["out_dir"] = args.out
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "runs", None) is not None:
        updates["runs"] = args.runs
    if getattr(args, "profile", None):
        updates["profile"] = args.profile
    if getattr(args, "corpus", None):
        updates["corpus"] = args.corpus
    return replace(cfg, **updates) if updates else cfg


def cmd_synth(args) -> int:
    from .data import save_corpus, synth_corpus

    recs = synth_corpus(args.users, args.sessions, args.session_len, args.channels,
                        seed=args.seed, harmonics=args.harmonics,
                        noise_sigma=args.noise_sigma, amp_sigma=args.amp_sigma,
                        offset=args.offset)
    save_corpus(recs, args.out)
    total = sum(r.length for r in recs)
    print(f"wrote {len(recs)} sessions ({args.users} users, {total} samples) to {args.out}")
    return 0


def cmd_run(args) -> int:
    from .analysis import corpus_for, run_experiment
    from .reports import format_summary, write_report

    cfg = _load_run_config(args)
    corpus = corpus_for(cfg)
    report = run_experiment(corpus, cfg)
    report_path, curves_path = write_report(report, cfg.out_dir)
    print(format_summary(report))
    print(f"report: {report_path}\ncurves: {curves_path}")
    return 0


def _parse_filter_configs(raw: str) -> list[tuple[int, ...]]:
    configs = []
    for chunk in raw.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            configs.append(tuple(int(v) for v in chunk.split(",")))
        except ValueError:
            raise ConfigError(f"bad filter configuration {chunk!r}")
    if not configs:
        raise ConfigError("no filter configurations given")
    return configs


def cmd_sweep(args) -> int:
    from .analysis import ProbeSetting, corpus_for, depth_sweep
    from .reports import atomic_write_text

    cfg = _load_run_config(args)
    configs = _parse_filter_configs(args.filters)
    corpus = corpus_for(cfg)
    setting = ProbeSetting(
        fe_spec=cfg.fe_spec(), projector=cfg.projector(), predictor=cfg.predictor(),
        recipe=cfg.profile_obj.recipe, pretrain_cfg=cfg.pretrain_cfg(cfg.seed),
        probe_cfg=cfg.classifier_cfg(cfg.seed),
        per_user=args.per_user or cfg.profile_obj.probe_samples_per_user,
        window_len=cfg.profile_obj.window_len, split=cfg.split)
    results = depth_sweep(corpus, configs, setting, cfg.runs, cfg.seed)
    print(f"{'filters':<28} {'mean kappa':>11} {'std':>8}")
    for row in results:
        mk = "undef" if row["mean_kappa"] is None else f"{row['mean_kappa']:.4f}"
        sk = "" if row["std_kappa"] is None else f"{row['std_kappa']:.4f}"
        print(f"{str(row['filters']):<28} {mk:>11} {sk:>8}")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out_dir / "sweep.json",
                          json.dumps({"config": cfg.resolved(), "sweep": results},
                                     indent=2, sort_keys=True) + "\n")
        print(f"sweep: {out_dir / 'sweep.json'}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite

    results = run_suite(h=args.step, threshold=args.threshold, seed=args.seed,
                        perturb=args.perturb)
    width = max(len(r.name) for r in results)
    failed = 0
    for r in results:
        status = "ok" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {r.max_rel_err:12.3e}  {status}")
        failed += not r.passed
    if failed:
        print(f"{failed} gradient check(s) failed")
        return 4
    print(f"all {len(results)} gradient checks passed")
    return 0


def cmd_bench(args) -> int:
    from .bench import format_bench, run_bench

    print(format_bench(run_bench(repeats=args.repeats, seed=args.seed)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="siamts",
        description="Self-supervised siamese training on multivariate time "
                    "series for user classification.")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_synth(sub)
    _add_run(sub)
    _add_sweep(sub)
    _add_gradcheck(sub)
    _add_bench(sub)
    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
    "bench": cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, ShapeError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    except SiamTSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

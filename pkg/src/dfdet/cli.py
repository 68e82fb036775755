"""Command-line front door.

Subcommands: gen-data, train-diffusion, extract-features, train-teacher,
train-student, evaluate, bench, report. Exit codes: 0 ok, 2 usage,
3 config, 4 missing artifact, 5 numeric failure. DFDET_WORKDIR overrides
the working directory.

gen-data always writes the real corpora; fake corpora are added once the
diffusion checkpoints exist, so the standard run invokes it twice (before
and after train-diffusion).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .bench import benchmark, speedup, write_bench_csv
from .config import ConfigError, config_dict, load_config
from .datagen import (concat_datasets, gen_fake, gen_real, gen_unseen_fake,
                      load_dataset, load_features, save_dataset, save_features)
from .denoiser import Denoiser, DenoiserTrainConfig, train_denoiser
from .detector import DetectorModel, TrainConfig, pretrain_teacher, train_student
from .diffusion import (CallCountingDenoiser, make_linear_schedule,
                        make_step_plan)
from .flops import build_flop_model
from .forensics import compute_dire, extract_eps0, make_student_input
from .pipeline import (evaluate_per_generator, extract_features,
                       prepare_train_samples)
from .report import load_report, make_report, save_report
from .rng import Rng, make_rng
from .tensor import NumericError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING = 4
EXIT_NUMERIC = 5


class MissingArtifactError(FileNotFoundError):
    pass


def _need(path, hint):
    if not Path(path).exists():
        raise MissingArtifactError(f"missing artifact {path} (run `dfdet {hint}` first)")
    return path


def _sched_plan(cfg):
    sched = make_linear_schedule(cfg.diffusion.T, cfg.diffusion.beta_start,
                                 cfg.diffusion.beta_end)
    plan = make_step_plan(cfg.diffusion.T, cfg.diffusion.S)
    return sched, plan


# -- subcommands -----------------------------------------------------------


def cmd_gen_data(cfg, args):
    work = Path(cfg.workdir)
    (work / "data").mkdir(parents=True, exist_ok=True)
    d, size = cfg.data, cfg.data.image_size

    corpus = gen_real(cfg.denoiser.corpus_n, size, Rng(cfg.seed, 1))
    save_dataset(corpus, work / "data/denoiser_corpus.ddfd")
    train_real = gen_real(d.train_real, size, Rng(cfg.seed, 2))
    test_real = gen_real(d.test_real, size, Rng(cfg.seed, 3))
    print(f"wrote real corpora: {cfg.denoiser.corpus_n} denoiser, "
          f"{d.train_real} train, {d.test_real} test")

    if not cfg.denoiser_ckpt.exists():
        save_dataset(train_real, work / "data/train_real.ddfd")
        save_dataset(test_real, work / "data/test_real.ddfd")
        print("no denoiser checkpoint yet; fake corpora skipped "
              "(rerun gen-data after train-diffusion)")
        return

    _, plan = _sched_plan(cfg)
    model, sched = Denoiser.load(cfg.denoiser_ckpt)
    train_fake = gen_fake(model, sched, d.train_fake, plan, Rng(cfg.seed, 4), size=size)
    test_fake = gen_fake(model, sched, d.test_fake_seen, plan, Rng(cfg.seed, 5), size=size)
    variant, vsched = Denoiser.load(_need(cfg.denoiser_variant_ckpt, "train-diffusion"))
    unseen = gen_unseen_fake(variant, vsched, d.test_fake_unseen, Rng(cfg.seed, 6),
                             size=size, s_values=d.unseen_s_values)

    save_dataset(concat_datasets([train_real, train_fake], "train"),
                 work / "data/train.ddfd")
    save_dataset(concat_datasets([test_real, test_fake], "test"),
                 work / "data/test_seen.ddfd")
    save_dataset(unseen, work / "data/test_unseen.ddfd")
    print(f"wrote train ({len(train_real) + len(train_fake)}), "
          f"test_seen ({len(test_real) + len(test_fake)}), "
          f"test_unseen ({len(unseen)})")


def cmd_train_diffusion(cfg, args):
    work = Path(cfg.workdir)
    corpus = load_dataset(_need(work / "data/denoiser_corpus.ddfd", "gen-data"))
    sched, _ = _sched_plan(cfg)
    tcfg = DenoiserTrainConfig(epochs=cfg.denoiser.epochs,
                               batch_size=cfg.denoiser.batch_size,
                               lr=cfg.denoiser.lr, T=cfg.diffusion.T)
    for name, seed, path in (("primary", cfg.seed, cfg.denoiser_ckpt),
                             ("variant", cfg.seed + 1, cfg.denoiser_variant_ckpt)):
        model, hist = train_denoiser(corpus.images, sched, tcfg, make_rng(seed, 7))
        model.save(path, sched)
        print(f"{name} denoiser: final epoch loss {hist[-1]:.4f} -> {path}")


def cmd_extract_features(cfg, args):
    work = Path(cfg.workdir)
    model, sched = Denoiser.load(_need(cfg.denoiser_ckpt, "train-diffusion"))
    plan = make_step_plan(sched.T, cfg.diffusion.S)
    (work / "features").mkdir(parents=True, exist_ok=True)
    for name in ("train", "test_seen", "test_unseen"):
        ds = load_dataset(_need(work / f"data/{name}.ddfd", "gen-data"))
        samples = extract_features(ds, model, sched, plan)
        save_features(samples, work / f"features/{name}.ddfs", split=ds.split)
        print(f"{name}: {len(samples)} samples -> features/{name}.ddfs")


def cmd_train_teacher(cfg, args):
    work = Path(cfg.workdir)
    samples, _ = load_features(_need(work / "features/train.ddfs", "extract-features"))
    train, stats = prepare_train_samples(samples, Rng(cfg.seed, 8))
    dire = np.stack([s.dire for s in train])
    labels = np.array([s.label for s in train])
    tcfg = TrainConfig(lam=0.0, lr=cfg.detector.lr, epochs=cfg.detector.teacher_epochs,
                       batch_size=cfg.detector.batch_size, seed=cfg.seed, use_kd=False)
    teacher = pretrain_teacher(dire, labels, tcfg, make_rng(cfg.seed, 9))
    teacher.save(cfg.teacher_ckpt)
    print(f"teacher trained and frozen -> {cfg.teacher_ckpt}")


def cmd_train_student(cfg, args):
    work = Path(cfg.workdir)
    use_kd = not args.no_kd
    samples, _ = load_features(_need(work / "features/train.ddfs", "extract-features"))
    teacher = DetectorModel.load(_need(cfg.teacher_ckpt, "train-teacher"), frozen=True)
    train, stats = prepare_train_samples(samples, Rng(cfg.seed, 8))
    scfg = TrainConfig(lam=cfg.detector.lam, lr=cfg.detector.lr,
                       epochs=cfg.detector.epochs, batch_size=cfg.detector.batch_size,
                       seed=cfg.seed, use_kd=use_kd)
    student, hist = train_student(train, teacher, scfg, make_rng(cfg.seed, 10))
    path = cfg.student_ckpt(use_kd)
    student.save(path)
    cls, kd, tot = hist[-1]
    print(f"student (kd={use_kd}): final cls {cls:.4f} kd {kd:.4f} total {tot:.4f} -> {path}")


def _load_eval_context(cfg):
    work = Path(cfg.workdir)
    train_samples, _ = load_features(_need(work / "features/train.ddfs", "extract-features"))
    _, stats = prepare_train_samples(train_samples, Rng(cfg.seed, 8))
    return work, stats


def cmd_evaluate(cfg, args):
    work, stats = _load_eval_context(cfg)
    results = {}
    for use_kd in (True, False):
        path = cfg.student_ckpt(use_kd)
        if not path.exists():
            if use_kd:
                raise MissingArtifactError(
                    f"missing artifact {path} (run `dfdet train-student` first)")
            continue
        student = DetectorModel.load(path)
        kd_key = "kd" if use_kd else "nokd"
        results[kd_key] = {}
        for name in ("test_seen", "test_unseen"):
            samples, _ = load_features(_need(work / f"features/{name}.ddfs",
                                             "extract-features"))
            results[kd_key][name] = evaluate_per_generator(student, samples, stats)
    out = work / "evaluation.json"
    import json
    out.write_text(json.dumps(results, indent=2, sort_keys=True) + "\n")
    for kd_key, sections in results.items():
        for name, table in sections.items():
            o = table["overall"]
            print(f"{kd_key} {name}: acc {o['accuracy']:.3f} ap {o['ap']:.3f}")
    print(f"-> {out}")


def cmd_bench(cfg, args):
    work, stats = _load_eval_context(cfg)
    model, sched = Denoiser.load(_need(cfg.denoiser_ckpt, "train-diffusion"))
    plan = make_step_plan(sched.T, cfg.diffusion.S)
    teacher = DetectorModel.load(_need(cfg.teacher_ckpt, "train-teacher"), frozen=True)
    student = DetectorModel.load(_need(cfg.student_ckpt(True), "train-student"))
    test = load_dataset(_need(work / "data/test_seen.ddfd", "gen-data"))
    items = [test.images[i] for i in range(min(cfg.bench.items, len(test)))]

    proxy = CallCountingDenoiser(model)
    dm = stats.dire_mean[:, None, None]
    dsd = stats.dire_std[:, None, None]
    xm = stats.x0_mean[:, None, None]
    xsd = stats.x0_std[:, None, None]

    def dire_pipeline(x):
        dire = compute_dire(x, proxy, sched, plan)
        return teacher.prob((dire - dm) / dsd)

    def distil_pipeline(x):
        eps0 = extract_eps0(x, proxy, sched, plan)
        return student.prob(make_student_input((x - xm) / xsd, eps0))

    fm = build_flop_model(model, teacher, student, plan.S,
                          image_shape=test.images.shape[1:])
    r_dire = benchmark("dire", dire_pipeline, proxy, items,
                       warmup=cfg.bench.warmup, runs=cfg.bench.runs,
                       flops=fm.dire_pipeline)
    r_distil = benchmark("distil", distil_pipeline, proxy, items,
                         warmup=cfg.bench.warmup, runs=cfg.bench.runs,
                         flops=fm.distil_pipeline)
    results = [r_dire, r_distil]
    write_bench_csv(results, work / "bench.csv")
    sp = speedup(r_dire, r_distil)
    print(f"dire:   median {r_dire.median_sec*1e3:.2f} ms/item, "
          f"{r_dire.denoiser_calls_per_item:.0f} denoiser calls/item")
    print(f"distil: median {r_distil.median_sec*1e3:.2f} ms/item, "
          f"{r_distil.denoiser_calls_per_item:.0f} denoiser calls/item")
    print(f"speedup {sp:.2f}x, flop ratio {fm.ratio:.1f}x -> bench.csv")
    import json
    (work / "bench.json").write_text(json.dumps(
        [r.__dict__ for r in results] + [{"speedup": sp, "flop_ratio": fm.ratio}],
        indent=2) + "\n")


def cmd_report(cfg, args):
    import json
    work = Path(cfg.workdir)
    eval_path = _need(work / "evaluation.json", "evaluate")
    bench_path = _need(work / "bench.json", "bench")
    evaluation = json.loads(Path(eval_path).read_text())
    bench_rows = json.loads(Path(bench_path).read_text())
    metrics = evaluation.get("kd", {})
    ablation = {
        "with_kd": evaluation.get("kd", {}).get("test_unseen"),
        "without_kd": evaluation.get("nokd", {}).get("test_unseen"),
    }
    report = make_report(
        metrics=metrics,
        ablation=ablation,
        bench=[r for r in bench_rows if "name" in r],
        config=config_dict(cfg),
        seed=cfg.seed,
        run_id=f"seed{cfg.seed}",
    )
    save_report(report, cfg.report_path)
    load_report(cfg.report_path)
    print(f"report -> {cfg.report_path}")


# -- entry point -----------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dfdet",
        description="Desk-scale diffusion-forensics detection experiments",
    )
    parser.add_argument("--config", help="JSON config file", default=None)
    parser.add_argument("--workdir", help="working directory (default: workdir)")
    parser.add_argument("--seed", type=int, help="experiment seed (default: 0)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config value, e.g. diffusion.S=10")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", help="generate real (and, once a denoiser "
                   "exists, fake) corpora")
    sub.add_parser("train-diffusion", help="train the primary and variant "
                   "noise predictors")
    sub.add_parser("extract-features", help="compute DIRE and first-leg "
                   "noise for every split")
    sub.add_parser("train-teacher", help="pretrain and freeze the "
                   "reconstruction-error teacher")
    p_student = sub.add_parser("train-student", help="train the single-call "
                               "student detector")
    p_student.add_argument("--no-kd", action="store_true",
                           help="drop the distillation term (ablation)")
    sub.add_parser("evaluate", help="per-generator accuracy/AP on the test splits")
    sub.add_parser("bench", help="wall-clock and FLOP comparison of both pipelines")
    sub.add_parser("report", help="assemble the JSON run report")
    return parser


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-diffusion": cmd_train_diffusion,
    "extract-features": cmd_extract_features,
    "train-teacher": cmd_train_teacher,
    "train-student": cmd_train_student,
    "evaluate": cmd_evaluate,
    "bench": cmd_bench,
    "report": cmd_report,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config, args.set)
        if args.workdir:
            cfg.workdir = args.workdir
        env_workdir = os.environ.get("DFDET_WORKDIR")
        if env_workdir and not args.workdir:
            cfg.workdir = env_workdir
        if args.seed is not None:
            cfg.seed = args.seed
        Path(cfg.workdir).mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        _COMMANDS[args.command](cfg, args)
    except MissingArtifactError as exc:
        print(f"error: missing-artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except NumericError as exc:
        print(f"error: numeric-failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""KD ablation across seeds: trains student pairs (with/without the
distillation term) on the shared feature sets and compares unseen-generator
AP. Expects a workdir where extract-features and train-teacher already ran.

Usage: python3 scripts/kd_ablation.py [workdir] [n_seeds]
"""

import json
import sys
from pathlib import Path

import numpy as np

from dfdet.config import load_config
from dfdet.datagen import load_features
from dfdet.detector import DetectorModel, TrainConfig, train_student
from dfdet.pipeline import evaluate_per_generator, prepare_train_samples
from dfdet.rng import Rng, make_rng

workdir = Path(sys.argv[1] if len(sys.argv) > 1 else "workdir")
n_seeds = int(sys.argv[2]) if len(sys.argv) > 2 else 5
cfg = load_config()
cfg.workdir = str(workdir)

train_samples, _ = load_features(workdir / "features/train.ddfs")
unseen_samples, _ = load_features(workdir / "features/test_unseen.ddfs")
teacher = DetectorModel.load(cfg.teacher_ckpt, frozen=True)

rows = []
for seed in range(n_seeds):
    train, stats = prepare_train_samples(train_samples, Rng(seed, 8))
    aps = {}
    for use_kd in (True, False):
        tcfg = TrainConfig(lam=cfg.detector.lam, lr=cfg.detector.lr,
                           epochs=cfg.detector.epochs,
                           batch_size=cfg.detector.batch_size,
                           seed=seed, use_kd=use_kd)
        student, _ = train_student(train, teacher, tcfg, make_rng(seed, 10))
        table = evaluate_per_generator(student, unseen_samples, stats)
        aps["kd" if use_kd else "nokd"] = table["overall"]["ap"]
    rows.append({"seed": seed, **aps, "delta": aps["kd"] - aps["nokd"]})
    print(f"seed {seed}: kd {aps['kd']:.4f} nokd {aps['nokd']:.4f} "
          f"delta {rows[-1]['delta']:+.4f}", flush=True)

deltas = np.array([r["delta"] for r in rows])
summary = {
    "rows": rows,
    "mean_delta": float(deltas.mean()),
    "seeds_improved": int((deltas > 0).sum()),
    "n_seeds": n_seeds,
}
out = workdir / "kd_ablation.json"
out.write_text(json.dumps(summary, indent=2) + "\n")
print(f"mean AP delta {summary['mean_delta']:+.4f}, "
      f"{summary['seeds_improved']}/{n_seeds} seeds improved -> {out}")

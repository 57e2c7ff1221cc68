"""Train the three-class causal inference model on a small schedule and watch
the loss terms and validation accuracy evolve, ending with a checkpoint
save/load roundtrip.

Run: python3 demos/train_model.py  (about a minute on one core)
"""

import tempfile
from pathlib import Path

import numpy as np

from causalpairs.datagen import GenConfig, generate_epoch, substream
from causalpairs.model import TrainConfig, load_checkpoint, predict_batch, save_checkpoint, train

cfg = TrainConfig(
    epochs=10,
    samples_per_epoch=256,
    batch_size=32,
    val_samples=60,
    seed=0,
    gen=GenConfig(dim=6, pairs=60, seed=0),
)

print("Training (10 epochs x 256 datasets, d=6, m=60)")
params, metrics = train(cfg)
print(f"{'epoch':>5} {'L_C':>7} {'L_R':>7} {'L_A':>8} {'val_acc':>8}")
for row in metrics:
    print(f"{row['epoch']:>5} {row['L_C']:>7.3f} {row['L_R']:>7.3f} "
          f"{row['L_A']:>8.3f} {row['val_acc']:>8.3f}")

rng = np.random.default_rng(substream(cfg.seed, 9999))
test = list(generate_epoch(cfg.gen, rng, n=150))
labels = np.array([s.label for s in test])
acc = np.mean(predict_batch(params, test, cfg.lam_ridge) == labels)
print(f"\nfresh-data accuracy over 150 datasets: {acc:.3f} (chance = 0.333)")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "model.ckpt"
    save_checkpoint(path, params, hyper={"seed": cfg.seed})
    restored, hyper = load_checkpoint(path)
    same = np.mean(predict_batch(restored, test, cfg.lam_ridge) == labels)
    print(f"checkpoint roundtrip accuracy: {same:.3f} (hyper = {hyper})")

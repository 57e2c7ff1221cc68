"""The causal-consistency proxy end to end: sample attribute pairs from a
known net, render them as high-dimensional observations through a frozen
random network, train attribute predictors, and measure how consistently a
direction method recovers the true relation from learned representations
across disjoint subsets and training epochs.

Run: python3 demos/consistency_check.py  (about a minute on one core)
"""

import numpy as np

from causalpairs.baselines import ScoreMethod, calibrate_threshold, classify_score, score_sample
from causalpairs.consistency import (
    ObservationModel,
    causal_consistency,
    generate_observations,
    train_attribute_predictors,
)
from causalpairs.datagen import FunctionClass, GenConfig, GraphKind, Sample, generate_epoch, substream
from causalpairs.labels import default_cpts, gibbs_sample

ARITY = 4
graph = GraphKind.G1  # truth: attribute X causes attribute Y

net = default_cpts(graph, "high", arity=ARITY)
pairs = gibbs_sample(net, 1000, np.random.default_rng(0))
obs_model = ObservationModel(ARITY, np.random.default_rng(1))
observations = generate_observations(pairs, obs_model, np.random.default_rng(2))
print(f"observations: {observations.shape} from {len(pairs)} attribute pairs on {graph.value}")

print("training attribute predictors (30 epochs)...")
pred_x, pred_y, snapshots = train_attribute_predictors(observations, pairs, epochs=30, seed=0)
print(f"final val acc: x={snapshots[-1]['val_acc_x']:.3f} y={snapshots[-1]['val_acc_y']:.3f}")

# calibrate a RECI threshold on synthetic data matched to the representation
# dimensionality, then use it as the subset-level direction inference
rep_dim = snapshots[-1]["reps_x"].shape[1]
gen = GenConfig(dim=rep_dim, pairs=100, seed=0)
val = list(generate_epoch(gen, np.random.default_rng(substream(0, 7)), n=150))
scores = [score_sample(ScoreMethod.RECI, s) for s in val]
tau = calibrate_threshold(scores, [s.label for s in val])


def infer(x, y):
    s = Sample(x, y, 0, GraphKind.G1, FunctionClass.LINEAR)
    return classify_score(score_sample(ScoreMethod.RECI, s), tau)


report = causal_consistency(snapshots, graph.label, infer, subset_size=100,
                            graph=graph.value, method="reci")
print(f"\nconsistency per epoch (fraction of {report.subset_count} disjoint "
      f"subsets agreeing with the true relation):")
curve = " ".join(f"{v:.2f}" for v in report.per_epoch)
print(curve)
print(f"\nlast-10-epoch consistency: {report.mean:.3f} +/- {report.std:.3f}")
print(
    "\nnote: RECI's regression-error heuristic is known to be unreliable on"
    "\ndirect discrete relations like G1, where the converged representations"
    "\ncluster tightly; the trained three-class model tracks the relation much"
    "\nmore consistently. Compare with:"
    "\n  causalpairs consistency --methods ncinet --out out/consistency"
)

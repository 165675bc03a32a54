import sys
import numpy as np
from qtlbench.data import synthesize_features, split_assign
from qtlbench.harness import _batch_gradients, _evaluate
from qtlbench.heads import HeadConfig, build_head, head_forward
from qtlbench.nn import AdamState, adam_update

variant = sys.argv[1]
lr = float(sys.argv[2])
init_scale = float(sys.argv[3])  # 0 -> keep uniform [-pi, pi]

bundle = synthesize_features(2, 512, 300, 10.0, 7, with_teacher_logits=False)
man = split_assign(bundle, 1.0 / 3.0, seed=7)
train = bundle.take(np.array(man.train_indices))
evals = bundle.take(np.array(man.eval_indices))

cfg = HeadConfig("AECQTL", 9, depth=2, num_classes=2, feature_dim=512, seed=42)
m = build_head(cfg)
if init_scale > 0:
    rng = np.random.default_rng(4242)
    m.apply_updates(quantum=rng.uniform(-init_scale, init_scale, m.quantum_param_count))

if variant == "ceiling":
    from sklearn.linear_model import LogisticRegression
    def feats(b):
        return np.stack([head_forward(m, b.features[i])[1].z for i in range(b.n_records)])
    zt, ze = feats(train), feats(evals)
    clf = LogisticRegression(max_iter=5000).fit(zt, train.labels)
    print(f"[{variant}] z ceiling: train {clf.score(zt, train.labels):.3f} "
          f"eval {clf.score(ze, evals.labels):.3f}", flush=True)
    sys.exit(0)

ac = AdamState.fresh(m.classical_param_count, lr=lr)
aq = AdamState.fresh(m.quantum_param_count, lr=lr)
rng = np.random.default_rng([42, 0x5EED])
for epoch in range(14):
    order = rng.permutation(train.n_records)
    losses = []
    for s in range(0, order.size, 32):
        batch = order[s:s + 32]
        loss, gc, gq = _batch_gradients(m, train, batch, None)
        losses.append(loss)
        m.apply_updates(classical=adam_update(ac, m.classical_params, gc),
                        quantum=adam_update(aq, m.quantum_params, gq))
    sc = _evaluate(m, evals)
    print(f"[{variant}] epoch {epoch}: loss {np.mean(losses):.4f} "
          f"acc {sc['accuracy']:.3f} |gq| {np.linalg.norm(gq):.3g}", flush=True)

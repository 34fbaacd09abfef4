"""Compare phrase diversity with and without coverage and context modification.

The corpus plants every keyphrase word inside extra non-gold bigrams as well,
so a decoder that forgets what it already emitted keeps reusing those words.
The index of coincidence over the top five phrases (AIC@5) measures that reuse.

Run: python demos/diversity_ablation.py   (about a minute and a half)
"""

import numpy as np

from divkey.beam import ExtractionConfig
from divkey.corpus import ingest
from divkey.metrics import ModelExtractor, evaluate_corpus
from divkey.model import ModelConfig
from divkey.synthetic import make_corpus
from divkey.trainer import TrainConfig, train

rows = {True: [], False: []}
for seed in range(5):
    dataset = ingest(make_corpus(n_docs=20, vocab_size=50, seed=seed, distractors=True))
    for diverse in (True, False):
        mc = ModelConfig(d_in=16, d_h=24, gcn_layers=2, gru_layers=1, use_coverage=diverse, use_context=diverse)
        tc = TrainConfig(batch_size=8, max_steps=300, seed=seed, clip=1.0, lr_phase1=0.01)
        checkpoint, _ = train(tc, dataset, model_config=mc)
        extractor = ModelExtractor(checkpoint.model, ExtractionConfig(beam_width=10, max_depth=3, top_m=10))
        report = evaluate_corpus(extractor, dataset)
        rows[diverse].append((report.aic[5], report.f1[5]))
    print(f"seed {seed}: AIC@5 {rows[True][-1][0]:.3f} with diversity, {rows[False][-1][0]:.3f} without")

for diverse, label in ((True, "coverage + context"), (False, "neither")):
    aic, f1 = np.mean(rows[diverse], axis=0)
    print(f"{label:<20} AIC@5 {aic:.4f}  F1@5 {f1:.4f}")

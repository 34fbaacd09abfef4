"""Train a small model on a synthetic corpus, save it, reload it and extract keyphrases.

Run: python demos/train_and_extract.py   (about a minute on one core)
"""

import sys
import tempfile
from pathlib import Path

from divkey.beam import ExtractionConfig, extract_from_graph
from divkey.corpus import ingest, load_checkpoint, save_checkpoint
from divkey.metrics import ModelExtractor, evaluate_corpus
from divkey.model import ModelConfig
from divkey.synthetic import make_corpus
from divkey.trainer import TrainConfig, train

records = make_corpus(n_docs=20, vocab_size=50, seed=0)
dataset = ingest(records)
print(f"{len(dataset)} training documents, e.g. {records[0].title!r} with golds {records[0].keyphrases}")

config = TrainConfig(max_steps=800, max_epochs=10**6)
checkpoint, log = train(config, dataset, model_config=ModelConfig(d_in=32, d_h=48, gcn_layers=3, gru_layers=3))
for step, lr, loss, norm in log.steps[::100] + log.steps[-1:]:
    print(f"step {step:4d}  lr {lr:g}  loss {loss:.3f}  grad norm {norm:.2f}")

path = Path(tempfile.mkdtemp()) / "demo.ckpt"
save_checkpoint(checkpoint, path)
model = load_checkpoint(path).model
print(f"saved and reloaded {path} ({path.stat().st_size} bytes)")

cfg = ExtractionConfig(beam_width=20, top_m=5)
for item in dataset.documents[:3]:
    found = [p.text for p in extract_from_graph(model, item.graph, cfg)]
    print(f"{item.doc_id}: gold {[' '.join(g) for g in item.gold_tokens]}")
    print(f"{'':>{len(item.doc_id)}}  got  {found}")

report = evaluate_corpus(ModelExtractor(model, cfg), dataset)
sys.stdout.write(report.to_text())

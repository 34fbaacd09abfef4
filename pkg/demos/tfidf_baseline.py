"""Score the Tf-Idf baseline on a synthetic corpus, through the library and through the CLI.

Run: python demos/tfidf_baseline.py
"""

import sys
import tempfile
from pathlib import Path

from divkey.cli import main
from divkey.corpus import dump_jsonl, ingest
from divkey.metrics import TfidfExtractor, evaluate_corpus
from divkey.synthetic import make_corpus

records = make_corpus(n_docs=30, vocab_size=60, seed=2)
dataset = ingest(records, split="eval")
extractor = TfidfExtractor([d.doc for d in dataset.documents], max_phrases=10)

first = dataset.documents[0]
print("gold:", [" ".join(g) for g in first.gold_tokens])
print("tfidf:", [" ".join(p) for p in extractor(first)[:5]])
print()
sys.stdout.write(evaluate_corpus(extractor, dataset).to_text())

# Same thing from the command line; the JSON line is what scripts consume.
path = Path(tempfile.mkdtemp()) / "corpus.jsonl"
dump_jsonl(records, path)
print()
main(["eval", "--baseline", "tfidf", "--input", str(path)])

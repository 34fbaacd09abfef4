"""Build the proximity word graph of a short text and print its edges.

Run: python demos/word_graph.py
"""

import numpy as np

from divkey.graph import build_graph, format_edge_list
from divkey.text import tokenize

text = "Traffic noise model. A traffic noise model for city streets reduces noise."
doc = tokenize(text)
graph = build_graph(doc)

print("tokens:", " ".join(doc.tokens))
print("nodes (stems, first-occurrence order):", graph.node_table.nodes)
print()
print("src\tdst\tforward\tbackward")
print(format_edge_list(graph), end="")

# Repeated words get self-loops and heavier edges; the renormalized
# operators keep every eigenvalue inside the unit circle.
for name, m in (("forward", graph.a_fwd_norm), ("backward", graph.a_bwd_norm)):
    print(f"{name}: spectral radius {np.max(np.abs(np.linalg.eigvals(m))):.6f}")

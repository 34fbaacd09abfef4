"""Keyphrase extraction with a graph convolutional encoder and a diversified pointer decoder.

Typical use::

    from divkey.beam import extract_keyphrases
    from divkey.corpus import load_checkpoint

    model = load_checkpoint("model.ckpt").model
    for phrase in extract_keyphrases(model, "Title\\nAbstract text ..."):
        print(phrase.text, phrase.norm_score)
"""

__version__ = "0.1.0"

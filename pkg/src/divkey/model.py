"""Model configuration and the container for every learned parameter."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .autodiff import BatchNormStats, GRUParams, Parameter, glorot_normal

UNK = "<unk>"


@dataclass
class ModelConfig:
    d_in: int = 32
    d_h: int = 48
    gcn_layers: int = 3
    gru_layers: int = 3
    att_dim: int = 0  # 0 means "same as d_h"
    use_coverage: bool = True
    use_context: bool = True
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5
    dtype: str = "float32"
    max_doc_len: int = 512

    @classmethod
    def full_size(cls) -> "ModelConfig":
        return cls(d_in=300, d_h=400, gcn_layers=6, gru_layers=3)

    @property
    def attention_dim(self) -> int:
        return self.att_dim or self.d_h

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class AggWeights:
    """The three weight matrices of one neighbourhood aggregation."""

    bwd: Parameter
    fwd: Parameter
    self_: Parameter

    def parameters(self) -> list[Parameter]:
        return [self.bwd, self.fwd, self.self_]


@dataclass
class GCNLayer:
    f: AggWeights
    g: AggWeights
    g_bias: Parameter


class KeyphraseModel:
    """Graph-convolutional encoder plus diversified pointer decoder parameters.

    The embedding table is keyed by stem; row 0 is the unknown-stem row.
    Parameters are exposed by name through :meth:`named_parameters` in a
    fixed creation order, which the checkpoint format relies on.
    """

    def __init__(self, config: ModelConfig, vocab: Sequence[str], seed: int = 0, embeddings: np.ndarray | None = None):
        self.config = config
        vocab = list(vocab)
        if not vocab or vocab[0] != UNK:
            vocab = [UNK] + [v for v in vocab if v != UNK]
        self.vocab = vocab
        self.stem_index = {s: i for i, s in enumerate(vocab)}
        self.freeze_embeddings = False
        self._params: dict[str, Parameter] = {}
        self._build(np.random.default_rng(seed), embeddings)

    # -- construction ------------------------------------------------------
    def _add(self, name: str, value: np.ndarray) -> Parameter:
        p = Parameter(value.astype(self.dtype), name=name)
        self._params[name] = p
        return p

    def _matrix(self, rng, name, fan_in, fan_out) -> Parameter:
        return self._add(name, glorot_normal(rng, fan_in, fan_out, dtype=self.dtype))

    def _zeros(self, name, *shape) -> Parameter:
        return self._add(name, np.zeros(shape, dtype=self.dtype))

    def _agg(self, rng, prefix, d_in, d_out) -> AggWeights:
        return AggWeights(
            self._matrix(rng, f"{prefix}.bwd", d_in, d_out),
            self._matrix(rng, f"{prefix}.fwd", d_in, d_out),
            self._matrix(rng, f"{prefix}.self", d_in, d_out),
        )

    def _build(self, rng: np.random.Generator, embeddings) -> None:
        cfg = self.config
        d_in, d_h, att = cfg.d_in, cfg.d_h, cfg.attention_dim
        if embeddings is None:
            embeddings = glorot_normal(rng, len(self.vocab), d_in, dtype=self.dtype)
        elif embeddings.shape != (len(self.vocab), d_in):
            raise ValueError(f"embedding table {embeddings.shape} != {(len(self.vocab), d_in)}")
        self.embedding = self._add("embedding", np.asarray(embeddings))

        self.gcn: list[GCNLayer] = []
        for l in range(cfg.gcn_layers):
            width = d_in if l == 0 else d_h
            f = self._agg(rng, f"gcn.{l}.f", width, d_h)
            g = self._agg(rng, f"gcn.{l}.g", width, d_h)
            self.gcn.append(GCNLayer(f, g, self._zeros(f"gcn.{l}.g.bias", d_h)))
        self.readout = self._agg(rng, "gcn.readout", d_h, d_h)
        self.bn_gamma = self._add("bn.gamma", np.ones(d_h))
        self.bn_beta = self._zeros("bn.beta", d_h)
        self.bn_stats = BatchNormStats(
            np.zeros(d_h, dtype=self.dtype), np.ones(d_h, dtype=self.dtype), cfg.bn_momentum, cfg.bn_eps
        )

        self.gru: list[GRUParams] = []
        for l in range(cfg.gru_layers):
            W = np.concatenate([glorot_normal(rng, d_h, d_h, dtype=self.dtype) for _ in range(3)], axis=1)
            U_zr = np.concatenate([glorot_normal(rng, d_h, d_h, dtype=self.dtype) for _ in range(2)], axis=1)
            self.gru.append(
                GRUParams(
                    self._add(f"gru.{l}.W", W),
                    self._add(f"gru.{l}.U_zr", U_zr),
                    self._matrix(rng, f"gru.{l}.U_h", d_h, d_h),
                    self._zeros(f"gru.{l}.b", 3 * d_h),
                )
            )

        self.att_W_h = self._matrix(rng, "att.W_h", d_h, att)
        self.att_W_x = self._matrix(rng, "att.W_x", d_h, att)
        self.att_w_c = self._add("att.w_c", glorot_normal(rng, 1, att, shape=(att,), dtype=self.dtype))
        self.att_b = self._zeros("att.b", att)
        self.att_v = self._add("att.v", glorot_normal(rng, att, 1, shape=(att,), dtype=self.dtype))

        self.ctx_W_y = self._matrix(rng, "ctx.W_y", 2 * d_h, d_h)
        self.ctx_b_y = self._zeros("ctx.b_y", d_h)
        self.ctx_W_s = self._matrix(rng, "ctx.W_s", 2 * d_h, d_h)
        self.ctx_b_s = self._zeros("ctx.b_s", d_h)
        self.x_end = self._add("end", glorot_normal(rng, 1, d_h, shape=(d_h,), dtype=self.dtype))

    # -- access ------------------------------------------------------------
    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.config.dtype)

    def named_parameters(self) -> dict[str, Parameter]:
        return dict(self._params)

    def parameters(self) -> list[Parameter]:
        """Trainable parameters (the embedding table is skipped when frozen)."""
        return [p for n, p in self._params.items() if not (self.freeze_embeddings and n == "embedding")]

    def buffers(self) -> dict[str, np.ndarray]:
        return {"bn.running_mean": self.bn_stats.mean, "bn.running_var": self.bn_stats.var}

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {n: p.data for n, p in self._params.items()}
        out.update(self.buffers())
        return out

    def expected_shapes(self) -> dict[str, tuple[int, ...]]:
        """Shapes implied by the config and vocabulary, used to validate checkpoints."""
        return {n: a.shape for n, a in self.state_arrays().items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self._params.items():
            p.data = np.array(arrays[name], dtype=self.dtype, copy=True)
            p.zero_grad()
        self.bn_stats.mean[...] = arrays["bn.running_mean"]
        self.bn_stats.var[...] = arrays["bn.running_var"]

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: a.copy() for n, a in self.state_arrays().items()}

    def clone(self) -> "KeyphraseModel":
        return copy.deepcopy(self)

    def stem_ids(self, stems: Iterable[str]) -> np.ndarray:
        return np.array([self.stem_index.get(s, 0) for s in stems], dtype=np.intp)

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.zero_grad()


def build_vocab(stem_lists: Iterable[Iterable[str]]) -> list[str]:
    """Stems in first-occurrence order, preceded by the unknown-stem marker."""
    seen = {UNK: None}
    for stems in stem_lists:
        for s in stems:
            seen.setdefault(s, None)
    return list(seen)

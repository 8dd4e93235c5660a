"""Per-modality vertex features and their encoders.

Three modality kinds feed the propagation stage: a learnable embedding
table (used verbatim, no encoder), and raw feature matrices (text, visual,
or any extra tag) pushed through a small affine encoder. Vertices that
lack a modality's features (typically users for text/visual) end up with
exactly-zero encoded rows: the mask is applied after the encoder so a
nonzero bias cannot leak into featureless rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

EMBEDDING = "embedding"
TEXT = "text"
VISUAL = "visual"


@dataclass(frozen=True)
class ModalityId:
    """Modality tag; the three standard tags plus free-form extras."""

    tag: str

    def __post_init__(self):
        if not self.tag:
            raise ValueError("modality tag must be nonempty")

    def __str__(self):
        return self.tag


@dataclass(frozen=True)
class FeatureStore:
    """Raw |N| x dim feature matrix with a per-vertex availability mask.

    Rows where ``has_feature`` is false must be exactly zero.
    """

    modality: ModalityId
    dim: int
    rows: np.ndarray
    has_feature: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        mask = np.asarray(self.has_feature, dtype=bool)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "has_feature", mask)
        if self.dim <= 0:
            raise ValueError("feature dimension must be positive")
        if rows.ndim != 2 or rows.shape[1] != self.dim:
            raise ValueError(f"feature rows must be (N, {self.dim}), got {rows.shape}")
        if mask.shape != (rows.shape[0],):
            raise ValueError("has_feature mask length must match row count")
        if rows[~mask].any():
            raise ValueError("rows without features must be exactly zero")

    @property
    def num_vertices(self) -> int:
        return self.rows.shape[0]


@dataclass
class EncoderParams:
    """Affine encoder layers [(weight, bias), ...] applied in order.

    A smooth nonlinearity (tanh) sits between layers when there is more
    than one; the output layer is always linear.
    """

    layers: list = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise ValueError("encoder needs at least one layer")
        prev_out = None
        for weight, bias in self.layers:
            w = np.asarray(weight, dtype=np.float64)
            b = np.asarray(bias, dtype=np.float64)
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError("layer weight must be 2-D with a matching bias")
            if prev_out is not None and w.shape[0] != prev_out:
                raise ValueError("chained encoder layer dimensions disagree")
            prev_out = w.shape[1]

    @property
    def in_dim(self) -> int:
        return np.asarray(self.layers[0][0]).shape[0]

    @property
    def out_dim(self) -> int:
        return np.asarray(self.layers[-1][0]).shape[1]


@dataclass
class EmbeddingTable:
    """Directly trainable |N| x d table; shape is fixed at construction."""

    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=np.float64)
        if table.ndim != 2:
            raise ValueError("embedding table must be 2-D")
        self.table = table


def run_encoder(x, layers, mask_column, hidden_activation=ad.tanh):
    """Core encoder used by both the plain and the differentiable paths.

    ``layers`` may hold ndarrays or autodiff Variables. ``mask_column`` is
    a constant (N, 1) float array of 0/1 that zero-forces featureless rows
    after encoding.
    """
    h = x
    last = len(layers) - 1
    for i, (weight, bias) in enumerate(layers):
        h = ad.add(ad.matmul(h, weight), bias)
        if i < last:
            h = hidden_activation(h)
    return ad.mul(h, mask_column)


def encode_modality(store: FeatureStore, params: EncoderParams):
    """Encode raw modality features to the shared dimension.

    Featureless rows come out exactly zero regardless of the encoder
    parameters (in particular, the bias is masked away).
    """
    if store.dim != params.in_dim:
        raise ValueError(f"encoder expects input dim {params.in_dim}, "
                         f"store has {store.dim}")
    mask_col = store.has_feature.astype(np.float64)[:, None]
    return run_encoder(store.rows, params.layers, mask_col)


def encode_embedding(table: EmbeddingTable) -> np.ndarray:
    """The embedding modality needs no encoder; the table is the encoding."""
    return table.table


def xavier_bound(in_dim: int, out_dim: int) -> float:
    return float(np.sqrt(6.0 / (in_dim + out_dim)))


def init_parameters(kind: str, dims, rng: np.random.Generator):
    """Draw fresh parameters of the requested kind.

    kind="encoder": ``dims`` is the chain of layer sizes, e.g. (384, 64)
    or (384, 64, 64); weights are scaled-uniform with bound
    sqrt(6 / (in + out)), biases zero.
    kind="embedding": ``dims`` is (rows, dim); entries are normal(0, 0.01).
    """
    dims = tuple(int(d) for d in dims)
    if any(d <= 0 for d in dims):
        raise ValueError(f"all dimensions must be positive, got {dims}")
    if kind == "embedding":
        rows, dim = dims
        return EmbeddingTable(rng.normal(0.0, 0.01, size=(rows, dim)))
    if kind == "encoder":
        if len(dims) < 2:
            raise ValueError("encoder needs at least (in_dim, out_dim)")
        layers = []
        for in_dim, out_dim in zip(dims[:-1], dims[1:]):
            bound = xavier_bound(in_dim, out_dim)
            weight = rng.uniform(-bound, bound, size=(in_dim, out_dim))
            layers.append((weight, np.zeros(out_dim)))
        return EncoderParams(layers)
    raise ValueError(f"unknown parameter kind {kind!r}")

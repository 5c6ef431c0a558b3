"""Five-block GIN encoder with hand-written reverse-mode gradients.

The encoder turns a knowledge graph into (a) 148-way logits summed from
per-stage readouts and (b) a compact descriptor for late fusion.  Each block
computes ``relu(batchnorm(mlp((1+eps) * h_v + sum_u w_uv * h_u)))`` where the
MLP is two linear layers with a ReLU between them and edge weights enter the
neighborhood sum multiplicatively.  The hidden stack [h0..h5] is mean-pooled
per graph; dropout (train mode only, seeded) is applied to the pooled
vectors, each pooled stage is linearly projected to the readout dimension
and summed into the standalone logits, and the concatenated pooled stack is
separately projected to the fusion descriptor.

All math is float64 and functional: batch-norm running statistics are
returned as a new state dict, never mutated in place, so a loss evaluation
can be repeated bit-for-bit (finite-difference checks rely on this).
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Iterable, Sequence

import numpy as np

from ..errors import ContractError, NumericError
from ..graphs import KnowledgeGraph
from ..seeds import stream_rng

BN_EPS = 1e-5


@dataclass(frozen=True)
class GinConfig:
    input_dim: int = 50
    hidden_dim: int = 64
    num_blocks: int = 5
    readout_dim: int = 148
    descriptor_dim: int = 128
    dropout_rate: float = 0.5
    epsilon: float = 0.0
    learn_epsilon: bool = False
    bn_momentum: float = 0.9

    def __post_init__(self) -> None:
        if self.num_blocks != 5:
            raise ContractError("the encoder stack is fixed at five blocks")
        for name in ("input_dim", "hidden_dim", "readout_dim", "descriptor_dim"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ContractError("dropout_rate must lie in [0, 1)")

    @property
    def stage_dims(self) -> tuple[int, ...]:
        return (self.input_dim,) + (self.hidden_dim,) * self.num_blocks

    @property
    def pooled_dim(self) -> int:
        return sum(self.stage_dims)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "GinConfig":
        return cls(**obj)


def parameter_names(config: GinConfig) -> list[str]:
    names = []
    for i in range(1, config.num_blocks + 1):
        names += [
            f"block{i}.mlp1_w",
            f"block{i}.mlp1_b",
            f"block{i}.mlp2_w",
            f"block{i}.mlp2_b",
            f"block{i}.bn_gamma",
            f"block{i}.bn_beta",
            f"block{i}.eps",
        ]
    for i in range(config.num_blocks + 1):
        names += [f"readout{i}.w", f"readout{i}.b"]
    names += ["descriptor.w", "descriptor.b"]
    return names


def state_names(config: GinConfig) -> list[str]:
    names = []
    for i in range(1, config.num_blocks + 1):
        names += [f"block{i}.bn_mean", f"block{i}.bn_var"]
    return names


def trainable_names(config: GinConfig) -> set[str]:
    names = set(parameter_names(config))
    if not config.learn_epsilon:
        names -= {f"block{i}.eps" for i in range(1, config.num_blocks + 1)}
    return names


def _fan_in_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(config: GinConfig, seed: int) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Fan-in uniform initialization with one named stream per tensor."""
    params: dict[str, np.ndarray] = {}
    dims = config.stage_dims
    for i in range(1, config.num_blocks + 1):
        d_in, d_out = dims[i - 1], dims[i]
        hidden = config.hidden_dim
        rng = stream_rng(seed, "init", f"block{i}")
        params[f"block{i}.mlp1_w"] = _fan_in_uniform(rng, (d_in, hidden), d_in)
        params[f"block{i}.mlp1_b"] = _fan_in_uniform(rng, (hidden,), d_in)
        params[f"block{i}.mlp2_w"] = _fan_in_uniform(rng, (hidden, d_out), hidden)
        params[f"block{i}.mlp2_b"] = _fan_in_uniform(rng, (d_out,), hidden)
        params[f"block{i}.bn_gamma"] = np.ones(d_out)
        params[f"block{i}.bn_beta"] = np.zeros(d_out)
        params[f"block{i}.eps"] = np.full(1, config.epsilon)
    for i in range(config.num_blocks + 1):
        rng = stream_rng(seed, "init", f"readout{i}")
        params[f"readout{i}.w"] = _fan_in_uniform(rng, (dims[i], config.readout_dim), dims[i])
        params[f"readout{i}.b"] = _fan_in_uniform(rng, (config.readout_dim,), dims[i])
    rng = stream_rng(seed, "init", "descriptor")
    params["descriptor.w"] = _fan_in_uniform(
        rng, (config.pooled_dim, config.descriptor_dim), config.pooled_dim
    )
    params["descriptor.b"] = _fan_in_uniform(rng, (config.descriptor_dim,), config.pooled_dim)

    state = {}
    for i in range(1, config.num_blocks + 1):
        state[f"block{i}.bn_mean"] = np.zeros(dims[i])
        state[f"block{i}.bn_var"] = np.ones(dims[i])
    return params, state


# ---------------------------------------------------------------------------
# batched graphs
# ---------------------------------------------------------------------------


@dataclass
class GraphBatch:
    """Node-disjoint union of graphs with per-node graph ids."""

    features: np.ndarray  # (N, input_dim)
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_weight: np.ndarray
    graph_ids: np.ndarray  # (N,)
    num_graphs: int
    node_counts: np.ndarray  # (B,)

    def __post_init__(self) -> None:
        self._adjacency = None
        self._pool = None

    @property
    def adjacency(self):
        """Sparse dst-by-src weight matrix: ``adjacency @ H`` aggregates
        neighbors, ``adjacency.T @ G`` scatters gradients back."""
        if self._adjacency is None:
            from scipy.sparse import csr_matrix

            n = self.features.shape[0]
            adj = csr_matrix(
                (self.edge_weight, (self.edge_dst, self.edge_src)), shape=(n, n)
            )
            adj.eliminate_zeros()  # zero-weight edges contribute nothing
            self._adjacency = adj
        return self._adjacency

    @property
    def pool_matrix(self):
        """Sparse (num_graphs, N) mean-pooling operator."""
        if self._pool is None:
            from scipy.sparse import csr_matrix

            n = self.features.shape[0]
            weights = 1.0 / self.node_counts[self.graph_ids]
            self._pool = csr_matrix(
                (weights, (self.graph_ids, np.arange(n))), shape=(self.num_graphs, n)
            )
        return self._pool

    @classmethod
    def from_graphs(cls, graphs: Sequence[KnowledgeGraph]) -> "GraphBatch":
        if not graphs:
            raise ContractError("cannot batch zero graphs")
        feats, srcs, dsts, weights, gids, counts = [], [], [], [], [], []
        offset = 0
        for g_idx, g in enumerate(graphs):
            n = g.num_nodes
            feats.append(g.features)
            srcs.append(g.edge_src + offset)
            dsts.append(g.edge_dst + offset)
            weights.append(g.edge_weight)
            gids.append(np.full(n, g_idx, dtype=np.int64))
            counts.append(n)
            offset += n
        return cls(
            features=np.concatenate(feats, axis=0),
            edge_src=np.concatenate(srcs),
            edge_dst=np.concatenate(dsts),
            edge_weight=np.concatenate(weights),
            graph_ids=np.concatenate(gids),
            num_graphs=len(graphs),
            node_counts=np.asarray(counts, dtype=np.int64),
        )


def _segment_mean(values: np.ndarray, batch: GraphBatch) -> np.ndarray:
    return batch.pool_matrix @ values


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------


def gin_block_forward(
    node_features: np.ndarray,
    edge_src: np.ndarray,
    edge_dst: np.ndarray,
    edge_weight: np.ndarray,
    block_params: dict[str, np.ndarray],
    *,
    bypass_norm: bool = False,
) -> np.ndarray:
    """Single-block forward on one graph (reference path used by tests).

    ``bypass_norm`` skips batch normalization so the bare aggregation + MLP
    can be checked against hand computations.
    """
    if len(edge_src) and max(edge_src.max(), edge_dst.max()) >= node_features.shape[0]:
        raise ContractError("edge endpoints exceed node count")
    eps = float(block_params["eps"][0])
    agg = (1.0 + eps) * node_features
    if len(edge_src):
        np.add.at(agg, edge_dst, edge_weight[:, None] * node_features[edge_src])
    z1 = agg @ block_params["mlp1_w"] + block_params["mlp1_b"]
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ block_params["mlp2_w"] + block_params["mlp2_b"]
    if not bypass_norm:
        mean = z2.mean(axis=0)
        var = z2.var(axis=0)
        z2 = (z2 - mean) / np.sqrt(var + BN_EPS)
        z2 = block_params["bn_gamma"] * z2 + block_params["bn_beta"]
    return np.maximum(z2, 0.0)


@dataclass
class ForwardResult:
    logits: np.ndarray  # (B, readout_dim)
    descriptor: np.ndarray  # (B, descriptor_dim)
    hidden: list[np.ndarray]  # node-level [h0..h5]
    pooled: list[np.ndarray]  # per-graph pooled stack (post dropout in train)
    state: dict[str, np.ndarray]  # updated running statistics
    cache: dict = field(repr=False, default_factory=dict)


def encoder_forward(
    batch: GraphBatch | Sequence[KnowledgeGraph] | KnowledgeGraph,
    params: dict[str, np.ndarray],
    state: dict[str, np.ndarray],
    config: GinConfig,
    mode: str = "eval",
    dropout_key: int | None = None,
) -> ForwardResult:
    """Run the full stack; ``mode`` is "train" or "eval".

    Train mode normalizes with batch statistics (and returns updated running
    averages) and applies seeded dropout derived from ``dropout_key``.  Eval
    mode uses the stored running statistics and no dropout.
    """
    if isinstance(batch, KnowledgeGraph):
        batch = GraphBatch.from_graphs([batch])
    elif not isinstance(batch, GraphBatch):
        batch = GraphBatch.from_graphs(list(batch))
    if mode not in ("train", "eval"):
        raise ContractError(f"mode must be 'train' or 'eval', got {mode!r}")
    train = mode == "train"
    if train and dropout_key is None:
        raise ContractError("train mode requires a dropout_key for seeded masks")

    h = batch.features
    if h.shape[1] != config.input_dim:
        raise ContractError(
            f"graph features have dim {h.shape[1]}, config expects {config.input_dim}"
        )
    hidden = [h]
    new_state = dict(state)
    block_caches = []
    for i in range(1, config.num_blocks + 1):
        p = f"block{i}."
        eps = float(params[p + "eps"][0])
        agg = (1.0 + eps) * h + batch.adjacency @ h
        z1 = agg @ params[p + "mlp1_w"] + params[p + "mlp1_b"]
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ params[p + "mlp2_w"] + params[p + "mlp2_b"]
        if train:
            mean = z2.mean(axis=0)
            var = z2.var(axis=0)
            m = config.bn_momentum
            new_state[p + "bn_mean"] = m * state[p + "bn_mean"] + (1 - m) * mean
            new_state[p + "bn_var"] = m * state[p + "bn_var"] + (1 - m) * var
        else:
            mean = state[p + "bn_mean"]
            var = state[p + "bn_var"]
        istd = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (z2 - mean) * istd
        y = params[p + "bn_gamma"] * xhat + params[p + "bn_beta"]
        h_next = np.maximum(y, 0.0)
        block_caches.append(
            {"h_in": h, "agg": agg, "z1": z1, "a1": a1, "z2": z2, "xhat": xhat,
             "istd": istd, "y": y}
        )
        h = h_next
        hidden.append(h)

    pooled = [_segment_mean(stage, batch) for stage in hidden]

    masks = None
    if train and config.dropout_rate > 0.0:
        rng = stream_rng(dropout_key, "dropout")
        keep = 1.0 - config.dropout_rate
        masks = [
            (rng.random(stage.shape) < keep).astype(np.float64) / keep for stage in pooled
        ]
        pooled = [stage * mask for stage, mask in zip(pooled, masks)]

    logits = np.zeros((batch.num_graphs, config.readout_dim))
    for i, stage in enumerate(pooled):
        logits += stage @ params[f"readout{i}.w"] + params[f"readout{i}.b"]
    concat = np.concatenate(pooled, axis=1)
    descriptor = concat @ params["descriptor.w"] + params["descriptor.b"]

    if not (np.all(np.isfinite(logits)) and np.all(np.isfinite(descriptor))):
        raise NumericError("encoder forward produced non-finite outputs")

    cache = {
        "batch": batch,
        "config": config,
        "params": params,
        "train": train,
        "blocks": block_caches,
        "hidden": hidden,
        "pooled": pooled,
        "masks": masks,
        "concat": concat,
    }
    return ForwardResult(logits, descriptor, hidden, pooled, new_state, cache)


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------


def encoder_backward(
    result: ForwardResult,
    dlogits: np.ndarray | None = None,
    ddescriptor: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Reverse-mode gradients for every parameter tensor.

    Differentiates through the train-mode batch statistics; requires a
    forward result computed with ``mode="train"``.
    """
    cache = result.cache
    if not cache["train"]:
        raise ContractError("backward requires a train-mode forward pass")
    batch: GraphBatch = cache["batch"]
    config: GinConfig = cache["config"]
    params = cache["params"]
    pooled = cache["pooled"]
    masks = cache["masks"]

    grads = {name: np.zeros_like(tensor) for name, tensor in params.items()}
    dpooled = [np.zeros_like(stage) for stage in pooled]

    if dlogits is not None:
        for i, stage in enumerate(pooled):
            grads[f"readout{i}.w"] += stage.T @ dlogits
            grads[f"readout{i}.b"] += dlogits.sum(axis=0)
            dpooled[i] += dlogits @ params[f"readout{i}.w"].T
    if ddescriptor is not None:
        grads["descriptor.w"] += cache["concat"].T @ ddescriptor
        grads["descriptor.b"] += ddescriptor.sum(axis=0)
        dconcat = ddescriptor @ params["descriptor.w"].T
        offset = 0
        for i, stage in enumerate(pooled):
            width = stage.shape[1]
            dpooled[i] += dconcat[:, offset : offset + width]
            offset += width

    if masks is not None:
        dpooled = [d * mask for d, mask in zip(dpooled, masks)]

    # un-pool: gradient of a per-graph mean w.r.t. each member node
    def unpool(d_stage: np.ndarray) -> np.ndarray:
        return batch.pool_matrix.T @ d_stage

    dh = unpool(dpooled[config.num_blocks])
    for i in range(config.num_blocks, 0, -1):
        p = f"block{i}."
        blk = cache["blocks"][i - 1]
        n = blk["z2"].shape[0]

        dy = dh * (blk["y"] > 0.0)
        grads[p + "bn_gamma"] += (dy * blk["xhat"]).sum(axis=0)
        grads[p + "bn_beta"] += dy.sum(axis=0)
        dxhat = dy * params[p + "bn_gamma"]
        # batch-statistics backward
        istd = blk["istd"]
        xhat = blk["xhat"]
        dz2 = (istd / n) * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))

        grads[p + "mlp2_w"] += blk["a1"].T @ dz2
        grads[p + "mlp2_b"] += dz2.sum(axis=0)
        da1 = dz2 @ params[p + "mlp2_w"].T
        dz1 = da1 * (blk["z1"] > 0.0)
        grads[p + "mlp1_w"] += blk["agg"].T @ dz1
        grads[p + "mlp1_b"] += dz1.sum(axis=0)
        dagg = dz1 @ params[p + "mlp1_w"].T

        eps = float(params[p + "eps"][0])
        grads[p + "eps"] += np.array([(dagg * blk["h_in"]).sum()])
        dh_prev = (1.0 + eps) * dagg + batch.adjacency.T @ dagg
        dh = dh_prev + unpool(dpooled[i - 1])

    return grads


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    n = logits.shape[0]
    shift = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shift).sum(axis=1, keepdims=True))
    log_probs = shift - logsumexp
    loss = -log_probs[np.arange(n), labels].mean()
    dlogits = np.exp(log_probs)
    dlogits[np.arange(n), labels] -= 1.0
    return float(loss), dlogits / n


def loss_and_grad(
    graphs: Sequence[KnowledgeGraph] | GraphBatch,
    labels: Iterable[int],
    params: dict[str, np.ndarray],
    state: dict[str, np.ndarray],
    config: GinConfig,
    dropout_key: int = 0,
) -> tuple[float, dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Train-mode cross-entropy loss plus gradients for all parameters.

    Weight decay is decoupled (applied by the optimizer, not the loss).
    Returns the updated batch-norm running state alongside the gradients.
    """
    labels = np.asarray(list(labels) if not isinstance(labels, np.ndarray) else labels)
    result = encoder_forward(graphs, params, state, config, mode="train", dropout_key=dropout_key)
    if labels.shape[0] != result.logits.shape[0]:
        raise ContractError("labels and batch size differ")
    if labels.size and (labels.min() < 0 or labels.max() >= config.readout_dim):
        raise ContractError(f"labels must lie in [0, {config.readout_dim - 1}]")
    loss, dlogits = cross_entropy(result.logits, labels)
    if not np.isfinite(loss):
        raise NumericError(f"non-finite training loss: {loss}")
    grads = encoder_backward(result, dlogits=dlogits)
    return loss, grads, result.state

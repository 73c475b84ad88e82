"""Multi-stream GCN over a :class:`~megcn.graph.MultiEdgeGraph`.

Every layer runs T graph convolutions, one per edge dimension, on the same
input. Hidden layers concatenate the T stream outputs; the output layer pools
them elementwise (max/avg/min) into class logits. Gradients are derived by
hand and checked against finite differences in the test suite.
"""

import copy
import io
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ._io import npz_bytes
from .errors import Divergence, EmptyMask, MissingCheckpoint, ShapeMismatch

logger = logging.getLogger(__name__)

POOLINGS = ("max", "avg", "min")
MODES = ("separated", "shared")
ACTIVATIONS = ("relu", "leaky_relu")


@dataclass
class TrainConfig:
    T: int = 25
    d_ms: int = 25
    pooling: str = "max"
    mode: str = "separated"
    lr: float = 0.002
    dropout: float = 0.5
    max_epochs: int = 2000
    patience: int = 100
    seed: int = 0
    activation: str = "relu"
    leaky_slope: float = 0.01
    n_layers: int = 2
    dtype: str = "float64"

    def validate(self):
        if self.T < 1 or self.d_ms < 1:
            raise ValueError("T and d_ms must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max_epochs")
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")
        return self


@dataclass
class ModelParams:
    """``weights[l]`` has shape (S, d_in, d_out); S = T when streams are
    separated and 1 when shared."""

    weights: list
    mode: str = "separated"

    @property
    def n_params(self):
        return int(sum(w.size for w in self.weights))

    def copy(self):
        return ModelParams([w.copy() for w in self.weights], self.mode)


def param_count(T, d_ms, C, mode="separated", n_layers=2):
    """Trainable scalars of a model built by :func:`init_params`."""
    S = T if mode == "separated" else 1
    widths = [T] + [T * d_ms] * (n_layers - 1)
    outs = [d_ms] * (n_layers - 1) + [C]
    return sum(S * a * b for a, b in zip(widths, outs))


def init_params(config, n_features, n_classes):
    """Glorot-uniform weights, each (layer, stream) from its own sub-seed."""
    T, S = config.T, (config.T if config.mode == "separated" else 1)
    if n_features != T:
        raise ShapeMismatch(f"node features have width {n_features}, config T={T}")
    dtype = np.dtype(config.dtype)
    weights = []
    d_in = n_features
    for layer in range(config.n_layers):
        d_out = n_classes if layer == config.n_layers - 1 else config.d_ms
        limit = np.sqrt(6.0 / (d_in + d_out))
        W = np.empty((S, d_in, d_out), dtype=dtype)
        for s in range(S):
            rng = np.random.default_rng([config.seed, layer, s])
            W[s] = rng.uniform(-limit, limit, (d_in, d_out))
        weights.append(W)
        d_in = T * d_out
    return ModelParams(weights, config.mode)


# --------------------------------------------------------------------------
# building blocks
# --------------------------------------------------------------------------


def _activate(Z, activation, slope=0.01):
    if activation == "relu":
        return np.maximum(Z, 0.0)
    if activation == "leaky_relu":
        return np.where(Z > 0, Z, slope * Z)
    if activation in (None, "identity"):
        return Z
    raise ValueError(f"unknown activation {activation!r}")


def _activate_grad(Z, activation, slope=0.01):
    if activation == "relu":
        return (Z > 0).astype(Z.dtype)
    if activation == "leaky_relu":
        return np.where(Z > 0, 1.0, slope).astype(Z.dtype)
    return np.ones_like(Z)


def _stream_products(H, W, T):
    """(T, N, d_out) stack of H @ W_t, broadcasting a shared W."""
    if W.ndim != 3 or W.shape[1] != H.shape[1]:
        raise ShapeMismatch(f"input width {H.shape[1]} does not match weights {W.shape}")
    if W.shape[0] not in (1, T):
        raise ShapeMismatch(f"{W.shape[0]} weight streams for {T} graph streams")
    Y = np.matmul(H[None], W)
    if Y.shape[0] != T:
        Y = np.repeat(Y, T, axis=0)
    return Y


def ms_layer_forward(H, graph, W, activation="relu", dropout_mask=None, slope=0.01):
    """Per-stream outputs act(A_t @ drop(H) @ W_t), stacked as (T, N, d_out).

    All streams read the same dropped input.
    """
    X = H * dropout_mask if dropout_mask is not None else H
    Z = graph.propagate(_stream_products(X, W, graph.dims))
    return _activate(Z, activation, slope)


def concat_streams(streams):
    """(T, N, d) or a list of T (N, d) arrays -> (N, T*d), stream-major columns."""
    streams = np.asarray(streams)
    if streams.ndim != 3:
        raise ShapeMismatch("streams must share one (N, d) shape")
    T, N, d = streams.shape
    return streams.transpose(1, 0, 2).reshape(N, T * d)


def pool_streams(streams, method="max"):
    """Elementwise max/avg/min over the stream axis.

    Returns ``(pooled, choice)``; ``choice`` holds the selected stream per
    element for max/min (lowest index on ties) and ``None`` for avg.
    """
    streams = np.asarray(streams)
    if streams.ndim != 3:
        raise ShapeMismatch("streams must share one (N, C) shape")
    if method == "max":
        choice = np.argmax(streams, axis=0)
    elif method == "min":
        choice = np.argmin(streams, axis=0)
    elif method == "avg":
        return streams.mean(axis=0), None
    else:
        raise ValueError(f"unknown pooling {method!r}")
    return np.take_along_axis(streams, choice[None], axis=0)[0], choice


def _unpool(d_pooled, choice, method, T):
    if method == "avg":
        return np.broadcast_to(d_pooled / T, (T,) + d_pooled.shape).copy()
    out = np.zeros((T,) + d_pooled.shape, dtype=d_pooled.dtype)
    np.put_along_axis(out, choice[None], d_pooled[None], axis=0)
    return out


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def masked_softmax_xent(logits, labels, mask, with_grad=False):
    """Mean cross-entropy over the nodes in ``mask``.

    ``labels`` is indexed by node id. With ``with_grad`` also returns
    dloss/dlogits over all N rows (zero outside the mask).
    """
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise EmptyMask("loss mask selects no nodes")
    y = np.asarray(labels)[mask]
    if np.any(y < 0):
        raise EmptyMask("loss mask includes unlabelled nodes")
    z = logits[mask] - logits[mask].max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    per_node = logsumexp - z[np.arange(mask.size), y]
    loss = float(per_node.mean())
    if not with_grad:
        return loss
    grad = np.zeros_like(logits)
    p = np.exp(z - logsumexp[:, None])
    p[np.arange(mask.size), y] -= 1.0
    np.add.at(grad, mask, p / mask.size)
    return loss, grad


# --------------------------------------------------------------------------
# forward / backward
# --------------------------------------------------------------------------


def forward(graph, params, config, masks=None):
    """Pooled logits (N, C) and the cache :func:`backward` needs.

    The first layer propagates before multiplying, (A_t X) W_t: its input
    gradient is never needed, so backward skips one sparse product, and
    without dropout A_t H0 comes from the graph's cache.
    """
    T = graph.dims
    X = graph.node_features
    inputs, pre = [], []
    propagated = None
    L = len(params.weights)
    for layer, W in enumerate(params.weights):
        masked = masks is not None and masks[layer] is not None
        if masked:
            X = X * masks[layer]
        inputs.append(X)
        if layer == 0:
            if W.shape[1] != X.shape[1] or W.shape[0] not in (1, T):
                raise ShapeMismatch(f"input width {X.shape[1]} does not match weights {W.shape}")
            if masked:
                propagated = graph.propagate(np.ascontiguousarray(np.broadcast_to(X, (T,) + X.shape)))
            else:
                propagated = graph.propagated_features()
            Z = np.matmul(propagated, W)
        else:
            Z = graph.propagate(_stream_products(X, W, T))
        pre.append(Z)
        if layer < L - 1:
            X = concat_streams(_activate(Z, config.activation, config.leaky_slope))
    logits, choice = pool_streams(pre[-1], config.pooling)
    cache = {"inputs": inputs, "pre": pre, "choice": choice, "masks": masks, "propagated": propagated}
    return logits, cache


def backward(graph, params, config, cache, d_logits):
    """Gradients of the loss w.r.t. every weight tensor, given dloss/dlogits."""
    T = graph.dims
    L = len(params.weights)
    grads = [None] * L
    dZ = _unpool(d_logits, cache["choice"], config.pooling, T)
    for layer in range(L - 1, -1, -1):
        W = params.weights[layer]
        if layer == 0:
            gW = np.matmul(cache["propagated"].transpose(0, 2, 1), dZ)
            grads[0] = gW.sum(axis=0, keepdims=True) if W.shape[0] == 1 else gW
            break
        X = cache["inputs"][layer]
        dY = graph.propagate(dZ)  # normalized adjacency is symmetric
        gW = np.matmul(X.T[None], dY)
        grads[layer] = gW.sum(axis=0, keepdims=True) if W.shape[0] == 1 else gW
        dX = np.matmul(dY, W.transpose(0, 2, 1)).sum(axis=0)
        masks = cache["masks"]
        if masks is not None and masks[layer] is not None:
            dX = dX * masks[layer]
        N = dX.shape[0]
        dA = dX.reshape(N, T, -1).transpose(1, 0, 2)
        Zp = cache["pre"][layer - 1]
        dZ = dA * _activate_grad(Zp, config.activation, config.leaky_slope)
    return grads


def loss_and_grads(graph, params, config, labels, mask, masks=None):
    logits, cache = forward(graph, params, config, masks)
    loss, d_logits = masked_softmax_xent(logits, labels, mask, with_grad=True)
    return loss, backward(graph, params, config, cache, d_logits)


def predict(graph, params, config, node_ids=None):
    """Class ids (argmax, lowest id on ties) and softmax probabilities."""
    logits, _ = forward(graph, params, config)
    if node_ids is not None:
        logits = logits[np.asarray(node_ids, dtype=np.int64)]
    return np.argmax(logits, axis=1), softmax(logits)


# --------------------------------------------------------------------------
# optimisation
# --------------------------------------------------------------------------


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(w) for w in params.weights], [np.zeros_like(w) for w in params.weights])


def adam_step(params, grads, state, lr=0.002, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam, applied in place; returns ``(params, state)``."""
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for W, g, m, v in zip(params.weights, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        W -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = ""
    monitor: str = "val_loss"
    optimizer_state: AdamState | None = field(default=None, repr=False)

    @property
    def epochs(self):
        return len(self.train_loss)

    def summary(self):
        b = self.best_epoch - 1
        monitored = self.val_loss if self.monitor == "val_loss" else self.train_loss
        return {
            "epochs": self.epochs,
            "best_epoch": self.best_epoch,
            "best_monitored_loss": monitored[b] if self.epochs else None,
            "monitor": self.monitor,
            "stop_reason": self.stop_reason,
            "final_train_loss": self.train_loss[-1] if self.epochs else None,
        }


def _accuracy(logits, labels, ids):
    if len(ids) == 0:
        return float("nan")
    return float(np.mean(np.argmax(logits[ids], axis=1) == labels[ids]))


def node_labels(graph, doc_labels):
    """Length-N label array: document labels after U word slots of -1."""
    out = np.full(graph.n_nodes, -1, dtype=np.int64)
    out[graph.n_words:] = doc_labels
    return out


def train(graph, doc_labels, splits, config, n_classes=None, callback=None):
    """Full-batch training with early stopping on validation loss.

    Returns the parameters of the best epoch and the history. Without a
    validation set the (dropout-free) training loss is monitored instead.
    ``callback(epoch, history)`` may return True to stop early.
    """
    config.validate()
    dtype = np.dtype(config.dtype)
    if graph.node_features.dtype != dtype:
        graph = graph.astype(dtype)
    doc_labels = np.asarray(doc_labels)
    if n_classes is None:
        n_classes = int(doc_labels.max()) + 1
    labels = node_labels(graph, doc_labels)
    U = graph.n_words
    train_ids = np.asarray(splits.train_ids, dtype=np.int64) + U
    val_ids = np.asarray(splits.val_ids, dtype=np.int64) + U
    if train_ids.size == 0:
        raise EmptyMask("no training documents")

    params = init_params(config, graph.node_features.shape[1], n_classes)
    state = AdamState.zeros_like(params)
    rng = np.random.default_rng([config.seed, 0xD20])
    keep = 1.0 - config.dropout
    history = TrainHistory(monitor="val_loss" if val_ids.size else "train_loss")
    best_loss, best_params, wait = np.inf, params.copy(), 0

    for epoch in range(1, config.max_epochs + 1):
        masks = None
        if config.dropout > 0:
            masks = []
            for W in params.weights:
                masks.append((rng.random((graph.n_nodes, W.shape[1])) < keep).astype(dtype) / dtype.type(keep))
        loss, grads = loss_and_grads(graph, params, config, labels, train_ids, masks)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
            raise Divergence(f"non-finite training loss/gradient at epoch {epoch} (loss={loss})")
        adam_step(params, grads, state, lr=config.lr)

        logits, _ = forward(graph, params, config)
        history.train_loss.append(loss)
        history.train_acc.append(_accuracy(logits, labels, train_ids))
        if val_ids.size:
            val_loss = masked_softmax_xent(logits, labels, val_ids)
            history.val_loss.append(val_loss)
            history.val_acc.append(_accuracy(logits, labels, val_ids))
            monitored = val_loss
        else:
            monitored = masked_softmax_xent(logits, labels, train_ids)
        if not np.isfinite(monitored):
            raise Divergence(f"non-finite monitored loss at epoch {epoch}")

        if monitored < best_loss:
            best_loss, best_params, wait = monitored, params.copy(), 0
            history.best_epoch = epoch
            history.optimizer_state = copy.deepcopy(state)
        else:
            wait += 1
            if wait >= config.patience:
                history.stop_reason = "patience"
                break
        if callback is not None and callback(epoch, history):
            history.stop_reason = "callback"
            break
    else:
        history.stop_reason = "max_epochs"
    logger.info("training stopped at epoch %d (%s), best epoch %d",
                history.epochs, history.stop_reason, history.best_epoch)
    return best_params, history


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------


@dataclass
class Checkpoint:
    config: TrainConfig
    params: ModelParams
    adam: AdamState | None
    best_epoch: int
    metrics: dict


def checkpoint_bytes(config, params, adam=None, best_epoch=0, metrics=None):
    arrays = {f"w{l}": w for l, w in enumerate(params.weights)}
    if adam is not None:
        arrays.update({f"m{l}": m for l, m in enumerate(adam.m)})
        arrays.update({f"v{l}": v for l, v in enumerate(adam.v)})
    meta = {
        "config": asdict(config),
        "mode": params.mode,
        "n_layers": len(params.weights),
        "adam_t": adam.t if adam is not None else None,
        "best_epoch": best_epoch,
        "metrics": metrics or {},
    }
    arrays["meta"] = np.array(json.dumps(meta, sort_keys=True))
    return npz_bytes(arrays)


def load_checkpoint(source):
    """Read a checkpoint from a path or from raw bytes."""
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    else:
        try:
            open(source, "rb").close()
        except FileNotFoundError as exc:
            raise MissingCheckpoint(f"no checkpoint at {source}") from exc
    with np.load(source, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        n = meta["n_layers"]
        params = ModelParams([z[f"w{l}"] for l in range(n)], meta["mode"])
        adam = None
        if meta["adam_t"] is not None:
            adam = AdamState([z[f"m{l}"] for l in range(n)], [z[f"v{l}"] for l in range(n)], meta["adam_t"])
    return Checkpoint(TrainConfig(**meta["config"]), params, adam, meta["best_epoch"], meta["metrics"])


def clone_config(config, **changes):
    new = copy.deepcopy(config)
    for k, v in changes.items():
        setattr(new, k, v)
    return new

"""Graph attention regression network, implemented from scratch on numpy.

Architecture: node encoder (linear/ReLU/dropout), a stack of GATv2 layers
(each followed by batch normalization, ReLU and dropout), and a linear
head emitting one (delay delta, area delta) pair per node.  For an edge
j -> i the attention logit is a . leaky_relu(Wl h_i + Wr h_j), softmaxed
over i's in-neighborhood; messages aggregate Wr h_j.  Heads concatenate.

Message passing runs over forward edges, reversed edges and self-loops:
timing flows downstream but sizing decisions react to downstream loading,
so both directions carry signal.

Everything is float64 with hand-written gradients so a central finite
difference check can pin the backward pass tightly.  Eval-mode forward
performs its segment reductions in a canonical (value-sorted) order,
making outputs exactly equivariant under node permutations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericError, StructuralError

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
ADAM_B1 = 0.9
ADAM_B2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class ModelConfig:
    in_dim: int
    hidden: int = 64
    layers: int = 6
    heads: int = 8
    out_dim: int = 2
    dropout_p: float = 0.1
    leaky_slope: float = 0.2
    lr: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise DomainError(f"hidden ({self.hidden}) must split evenly over {self.heads} heads")
        if self.out_dim != 2:
            raise DomainError("the model predicts exactly (delay delta, area delta)")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads

    def to_dict(self) -> dict:
        return {
            "in_dim": self.in_dim, "hidden": self.hidden, "layers": self.layers,
            "heads": self.heads, "out_dim": self.out_dim, "dropout_p": self.dropout_p,
            "leaky_slope": self.leaky_slope, "lr": self.lr, "seed": self.seed,
        }


def param_order(cfg: ModelConfig):
    """Canonical (name, shape) list; checkpoints store arrays in this order."""
    order = [("enc.W", (cfg.in_dim, cfg.hidden)), ("enc.b", (cfg.hidden,))]
    for l in range(cfg.layers):
        order += [
            (f"gat{l}.Wl", (cfg.hidden, cfg.hidden)),
            (f"gat{l}.Wr", (cfg.hidden, cfg.hidden)),
            (f"gat{l}.a", (cfg.heads, cfg.head_dim)),
            (f"bn{l}.gamma", (cfg.hidden,)),
            (f"bn{l}.beta", (cfg.hidden,)),
        ]
    order += [("head.W", (cfg.hidden, cfg.out_dim)), ("head.b", (cfg.out_dim,))]
    return order


def buffer_order(cfg: ModelConfig):
    order = []
    for l in range(cfg.layers):
        order += [(f"bn{l}.run_mean", (cfg.hidden,)), (f"bn{l}.run_var", (cfg.hidden,))]
    return order


@dataclass
class ModelParams:
    cfg: ModelConfig
    params: dict
    buffers: dict
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    step: int = 0
    norm_fingerprint: str = ""

    def copy(self) -> "ModelParams":
        return ModelParams(
            cfg=self.cfg,
            params={k: v.copy() for k, v in self.params.items()},
            buffers={k: v.copy() for k, v in self.buffers.items()},
            adam_m={k: v.copy() for k, v in self.adam_m.items()},
            adam_v={k: v.copy() for k, v in self.adam_v.items()},
            step=self.step,
            norm_fingerprint=self.norm_fingerprint,
        )


def init_params(cfg: ModelConfig, rng=None) -> ModelParams:
    """Glorot-uniform weights, zero biases, identity batch norm."""
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
    params = {}
    for name, shape in param_order(cfg):
        if name.endswith(".b") or name.endswith(".beta"):
            params[name] = np.zeros(shape)
        elif name.endswith(".gamma"):
            params[name] = np.ones(shape)
        elif name.endswith(".a"):
            limit = np.sqrt(6.0 / (cfg.head_dim + 1))
            params[name] = rng.uniform(-limit, limit, size=shape)
        else:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, size=shape)
    buffers = {}
    for name, shape in buffer_order(cfg):
        buffers[name] = np.zeros(shape) if name.endswith("mean") else np.ones(shape)
    return ModelParams(cfg=cfg, params=params, buffers=buffers)


# -- batching -----------------------------------------------------------------


@dataclass
class GraphBatch:
    x: np.ndarray          # (N, in_dim), already normalized
    src: np.ndarray        # (E,) message edge sources
    dst: np.ndarray        # (E,) message edge targets
    n_nodes: int
    graph_slices: list     # (start, stop) node ranges per graph


def message_edges(g):
    """Forward edges, reversed edges and self-loops, sorted by (dst, src)."""
    pairs = []
    for u, v, _ in g.edges():
        pairs.append((u, v))
        pairs.append((v, u))
    for v in range(g.num_nodes):
        pairs.append((v, v))
    pairs.sort(key=lambda p: (p[1], p[0]))
    src = np.array([p[0] for p in pairs], dtype=np.int64)
    dst = np.array([p[1] for p in pairs], dtype=np.int64)
    return src, dst


def build_batch(graphs, stats) -> GraphBatch:
    """Concatenate normalized feature matrices and shifted edge lists."""
    from .labeling import apply_feature_norm

    xs, srcs, dsts, slices = [], [], [], []
    offset = 0
    for g in graphs:
        if g.features is None:
            raise StructuralError("graphs must be annotated with features before batching")
        x = apply_feature_norm(g.features, stats)
        s, d = message_edges(g)
        xs.append(x)
        srcs.append(s + offset)
        dsts.append(d + offset)
        slices.append((offset, offset + g.num_nodes))
        offset += g.num_nodes
    return GraphBatch(
        x=np.concatenate(xs, axis=0),
        src=np.concatenate(srcs),
        dst=np.concatenate(dsts),
        n_nodes=offset,
        graph_slices=slices,
    )


# -- primitive reductions ------------------------------------------------------


def _segment_max(values, seg, n):
    out = np.full((n,) + values.shape[1:], -np.inf)
    np.maximum.at(out, seg, values)
    return out


def _segment_sum(values, seg, n, canonical_key=None):
    """Sum `values` rows into `n` buckets.  With canonical_key the addends
    are pre-sorted by (bucket, key), making the reduction independent of
    input edge order (used by eval mode for exact permutation symmetry).
    """
    out = np.zeros((n,) + values.shape[1:])
    if canonical_key is None:
        np.add.at(out, seg, values)
    else:
        order = np.lexsort((canonical_key, seg))
        np.add.at(out, seg[order], values[order])
    return out


def _matmul_rowsafe(x, W):
    """x @ W computed row-independently, so results are bit-exact under row
    permutation.  Stacked matmul runs one independent vector-matrix product
    per row; a single flat GEMM does not guarantee that for every shape
    (measured: (N,64)x(64,2) is not row-stable under this BLAS).  The
    permutation-equivariance property test guards this assumption.
    """
    return np.matmul(x[:, None, :], W)[:, 0, :]


def _leaky(z, slope):
    return np.where(z > 0, z, slope * z)


def _leaky_grad(z, slope):
    return np.where(z > 0, 1.0, slope)


# -- forward / backward ---------------------------------------------------------


def forward(mp: ModelParams, batch: GraphBatch, training: bool, rng=None, exact_eval=None):
    """Run the network; returns (predictions, cache for backward).

    training=True draws dropout masks from rng and uses batch statistics
    for normalization (updating the running buffers in place);
    training=False is deterministic and touches nothing.  Eval mode
    defaults to exact (permutation-equivariant) reductions; exact_eval=False
    keeps eval semantics but uses the fast order-fixed reductions, for
    callers that re-run the forward thousands of times (gradient checks).
    """
    cfg = mp.cfg
    P = mp.params
    if training and rng is None:
        raise DomainError("training-mode forward needs the trainer's rng for dropout")
    if batch.x.shape[1] != cfg.in_dim:
        raise StructuralError(f"batch feature width {batch.x.shape[1]} != model in_dim {cfg.in_dim}")
    N = batch.n_nodes
    src, dst = batch.src, batch.dst
    H, K = cfg.heads, cfg.head_dim
    cache = {"layers": []}
    exact = (not training) if exact_eval is None else (exact_eval and not training)
    # exact mode trades matmul speed for bit-level row independence
    mm = _matmul_rowsafe if exact else (lambda a, b: a @ b)

    h = mm(batch.x, P["enc.W"]) + P["enc.b"]
    cache["enc_pre"] = h
    h = np.maximum(h, 0.0)
    h, mask = _dropout(h, cfg.dropout_p, training, rng)
    cache["enc_mask"] = mask
    cache["h0"] = h

    for l in range(cfg.layers):
        lc = {"h_in": h}
        UL = mm(h, P[f"gat{l}.Wl"])
        UR = mm(h, P[f"gat{l}.Wr"])
        UL3 = UL.reshape(N, H, K)
        UR3 = UR.reshape(N, H, K)
        z = UL3[dst] + UR3[src]                      # (E, H, K)
        zl = _leaky(z, cfg.leaky_slope)
        score = np.einsum("ehk,hk->eh", zl, P[f"gat{l}.a"])
        smax = _segment_max(score, dst, N)
        ex = np.exp(score - smax[dst])
        if exact:
            # canonical per-head order keeps outputs exactly permutation-equivariant
            denom = np.empty((N, H))
            for hh in range(H):
                denom[:, hh] = _segment_sum(ex[:, hh], dst, N, canonical_key=ex[:, hh])
        else:
            denom = _segment_sum(ex, dst, N)
        alpha = ex / denom[dst]
        msg = alpha[:, :, None] * UR3[src]
        if exact:
            agg = np.empty((N, H, K))
            for hh in range(H):
                agg[:, hh, :] = _segment_sum(msg[:, hh, :], dst, N, canonical_key=ex[:, hh])
        else:
            agg = _segment_sum(msg, dst, N)
        g_out = agg.reshape(N, cfg.hidden)
        lc.update(UL3=UL3, UR3=UR3, z=z, zl=zl, alpha=alpha, gat_out=g_out)

        bn_out, bn_cache = _bn_forward(g_out, P[f"bn{l}.gamma"], P[f"bn{l}.beta"],
                                       mp.buffers[f"bn{l}.run_mean"], mp.buffers[f"bn{l}.run_var"],
                                       training)
        lc["bn"] = bn_cache
        h = np.maximum(bn_out, 0.0)
        lc["relu_pre"] = bn_out
        h, mask = _dropout(h, cfg.dropout_p, training, rng)
        lc["mask"] = mask
        cache["layers"].append(lc)

    pred = mm(h, P["head.W"]) + P["head.b"]
    cache["h_last"] = h
    return pred, cache


def _dropout(h, p, training, rng):
    if not training or p <= 0.0:
        return h, None
    mask = (rng.random(h.shape) >= p) / (1.0 - p)
    return h * mask, mask


def _bn_forward(x, gamma, beta, run_mean, run_var, training):
    if training:
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        inv = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x - mu) * inv
        run_mean *= 1.0 - BN_MOMENTUM
        run_mean += BN_MOMENTUM * mu
        run_var *= 1.0 - BN_MOMENTUM
        run_var += BN_MOMENTUM * var
    else:
        inv = 1.0 / np.sqrt(run_var + BN_EPS)
        xhat = (x - run_mean) * inv
    return gamma * xhat + beta, {"xhat": xhat, "inv": inv, "training": training}


def _bn_backward(dy, gamma, cache):
    xhat, inv = cache["xhat"], cache["inv"]
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    dxhat = dy * gamma
    if cache["training"]:
        n = dy.shape[0]
        dx = (inv / n) * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
    else:
        dx = dxhat * inv
    return dx, dgamma, dbeta


def backward(mp: ModelParams, batch: GraphBatch, cache, gpred):
    """Gradients of a scalar loss wrt every parameter, given d loss/d pred."""
    cfg = mp.cfg
    P = mp.params
    N = batch.n_nodes
    src, dst = batch.src, batch.dst
    H, K = cfg.heads, cfg.head_dim
    grads = {}

    grads["head.W"] = cache["h_last"].T @ gpred
    grads["head.b"] = gpred.sum(axis=0)
    gh = gpred @ P["head.W"].T

    for l in reversed(range(cfg.layers)):
        lc = cache["layers"][l]
        if lc["mask"] is not None:
            gh = gh * lc["mask"]
        gh = gh * (lc["relu_pre"] > 0)
        gh, dgamma, dbeta = _bn_backward(gh, P[f"bn{l}.gamma"], lc["bn"])
        grads[f"bn{l}.gamma"] = dgamma
        grads[f"bn{l}.beta"] = dbeta

        g_agg = gh.reshape(N, H, K)
        UL3, UR3 = lc["UL3"], lc["UR3"]
        alpha, z, zl = lc["alpha"], lc["z"], lc["zl"]

        g_msg = g_agg[dst]                                     # (E, H, K)
        g_alpha = np.einsum("ehk,ehk->eh", g_msg, UR3[src])
        g_UR3 = np.zeros_like(UR3)
        np.add.at(g_UR3, src, alpha[:, :, None] * g_msg)

        seg = _segment_sum(alpha * g_alpha, dst, N)
        g_score = alpha * (g_alpha - seg[dst])
        grads[f"gat{l}.a"] = np.einsum("eh,ehk->hk", g_score, zl)
        g_zl = g_score[:, :, None] * P[f"gat{l}.a"][None]
        g_z = g_zl * _leaky_grad(z, cfg.leaky_slope)

        g_UL3 = np.zeros_like(UL3)
        np.add.at(g_UL3, dst, g_z)
        np.add.at(g_UR3, src, g_z)

        h_in = lc["h_in"]
        gUL = g_UL3.reshape(N, cfg.hidden)
        gUR = g_UR3.reshape(N, cfg.hidden)
        grads[f"gat{l}.Wl"] = h_in.T @ gUL
        grads[f"gat{l}.Wr"] = h_in.T @ gUR
        gh = gUL @ P[f"gat{l}.Wl"].T + gUR @ P[f"gat{l}.Wr"].T

    if cache["enc_mask"] is not None:
        gh = gh * cache["enc_mask"]
    gh = gh * (cache["enc_pre"] > 0)
    grads["enc.W"] = batch.x.T @ gh
    grads["enc.b"] = gh.sum(axis=0)
    return grads


def mse_loss(pred, target):
    """Mean squared error over all nodes and both heads, plus its gradient."""
    diff = pred - target
    loss = float((diff * diff).mean())
    gpred = 2.0 * diff / diff.size
    return loss, gpred


def adam_step(mp: ModelParams, grads, lr=None):
    cfg = mp.cfg
    lr = cfg.lr if lr is None else lr
    mp.step += 1
    t = mp.step
    for name in (n for n, _ in param_order(cfg)):
        g = grads[name]
        m = mp.adam_m.get(name)
        if m is None:
            m = mp.adam_m[name] = np.zeros_like(mp.params[name])
        v = mp.adam_v.get(name)
        if v is None:
            v = mp.adam_v[name] = np.zeros_like(mp.params[name])
        m *= ADAM_B1
        m += (1 - ADAM_B1) * g
        v *= ADAM_B2
        v += (1 - ADAM_B2) * g * g
        mhat = m / (1 - ADAM_B1**t)
        vhat = v / (1 - ADAM_B2**t)
        mp.params[name] -= lr * mhat / (np.sqrt(vhat) + ADAM_EPS)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_mae: float


def train(
    train_graphs,
    val_graphs,
    cfg: ModelConfig,
    stats,
    epochs: int = 100,
    batch_size: int = 8,
    patience: int = 10,
    norm_fingerprint: str = "",
    log=None,
):
    """Deterministic single-threaded training loop with early stopping.

    Returns (best ModelParams, list of EpochMetrics).  The best snapshot is
    the one with the lowest validation MAE on normalized node labels.
    """
    from .labeling import apply_label_norm

    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    mp = init_params(cfg, rng)
    mp.norm_fingerprint = norm_fingerprint

    train_items = []
    for g in train_graphs:
        if g.labels is None:
            raise DomainError("training graphs must carry labels")
        train_items.append((build_batch([g], stats), apply_label_norm(g.labels, stats)))
    val_graphs = list(val_graphs)
    if val_graphs:
        val_batch = build_batch(val_graphs, stats)
        val_y = np.concatenate([apply_label_norm(g.labels, stats) for g in val_graphs])

    history = []
    best = mp.copy()
    best_mae = np.inf
    stale = 0
    for epoch in range(epochs):
        order = rng.permutation(len(train_items))
        losses = []
        for start in range(0, len(order), batch_size):
            chunk = order[start : start + batch_size]
            xs, srcs, dsts, ys = [], [], [], []
            offset = 0
            for i in chunk:
                b, y = train_items[i]
                xs.append(b.x)
                srcs.append(b.src + offset)
                dsts.append(b.dst + offset)
                ys.append(y)
                offset += b.n_nodes
            batch = GraphBatch(
                x=np.concatenate(xs), src=np.concatenate(srcs), dst=np.concatenate(dsts),
                n_nodes=offset, graph_slices=[],
            )
            target = np.concatenate(ys)
            pred, cache = forward(mp, batch, training=True, rng=rng)
            loss, gpred = mse_loss(pred, target)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss in epoch {epoch}, batch {start // batch_size}")
            grads = backward(mp, batch, cache, gpred)
            adam_step(mp, grads)
            losses.append(loss)

        if val_graphs:
            pred, _ = forward(mp, val_batch, training=False)
            val_mae = float(np.abs(pred - val_y).mean())
        else:
            val_mae = float(np.mean(losses))
        history.append(EpochMetrics(epoch, float(np.mean(losses)), val_mae))
        if log:
            log(history[-1])
        if val_mae < best_mae - 1e-12:
            best_mae = val_mae
            best = mp.copy()
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
    return best, history


def predict(mp: ModelParams, graph, stats):
    """Denormalized per-node (delay delta, area delta) for one graph."""
    from .errors import CheckpointError
    from .labeling import invert_label_norm

    if mp.norm_fingerprint and mp.norm_fingerprint != stats.fingerprint():
        raise CheckpointError(
            f"normalization mismatch: checkpoint has {mp.norm_fingerprint[:12]}, "
            f"stats have {stats.fingerprint()[:12]}"
        )
    batch = build_batch([graph], stats)
    pred, _ = forward(mp, batch, training=False)
    return invert_label_norm(pred, stats)

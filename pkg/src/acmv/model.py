"""Multi-view spatiotemporal forecaster: assembly, training and prediction."""

from __future__ import annotations

import copy
import csv
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from acmv.attention import AttentionHead, ContextEmbedding, attention_weights, average_fuse, fuse
from acmv.chebconv import ChebLayer
from acmv.config import ModelConfig, OptimConfig, TrainConfig
from acmv.data import Scaler
from acmv.errors import ConfigError, EmptyDatasetError, NumericError, ShapeError, StateError
from acmv.graphs import VIEWS
from acmv.grid import PopulationFrame, SeriesWindow, stack_windows
from acmv.gru import GruCell
from acmv.metrics import evaluate
from acmv.nn import tensor as T
from acmv.nn.checkpoint import assign_params, load_checkpoint, save_checkpoint
from acmv.nn.layers import Dense, Module
from acmv.nn.optim import AdamState, adam_step, clip_grad_norm
from acmv.nn.tensor import Tape, no_tape

TEMPORAL = "temporal"
FUSION_MODES = ("attention", "average")


class ViewBlock(Module):
    """ChebConv stack -> context concat -> GRU -> per-region readout.

    With ``graph=None`` the spatial stage is skipped and raw frames feed the
    GRU (the temporal-only baseline).
    """

    def __init__(self, kind, graph, cfg, n_nodes, rng):
        self.kind = kind
        self.graph = graph
        self.n_nodes = n_nodes
        self.layers = []
        f_in = 1
        if graph is not None:
            if graph.n_nodes != n_nodes:
                raise ShapeError(f"{kind} graph has {graph.n_nodes} nodes, model expects {n_nodes}")
            for v, f_out in enumerate(cfg.gcn_features):
                act = "identity" if v == len(cfg.gcn_features) - 1 else cfg.activation
                self.layers.append(ChebLayer(cfg.K, f_in, int(f_out), rng, f"{kind}.cheb{v}", act))
                f_in = int(f_out)
        self.out_features = f_in
        self.gru = GruCell(n_nodes * f_in + cfg.context_dim, cfg.gru_hidden, rng, f"{kind}.gru")
        self.readout = Dense(cfg.gru_hidden, n_nodes, rng, f"{kind}.readout")

    def spatial(self, X):
        """(B, L, N) frames -> (B, L, N * F_out) flattened convolution output."""
        B, L, N = X.shape
        if self.graph is None:
            return T.as_tensor(X)
        # node-major layout (N, B, L, F) keeps graph products a single GEMM
        H = np.ascontiguousarray(np.transpose(X, (2, 0, 1)))[..., None]
        for layer in self.layers:
            H = layer(self.graph.scaled_laplacian, H)
        H = T.transpose(H, (1, 2, 0, 3))
        return T.reshape(H, (B, L, N * self.out_features))

    def __call__(self, X, e_seq):
        P = T.concat([self.spatial(X), e_seq], axis=-1)
        return self.readout(gru_sequence(self.gru, P))


def gru_sequence(cell, P):
    """Unroll ``cell`` over axis 1 of ``P`` (B, L, D) from a zero state.

    Input projections for all steps are computed in one product; the result
    equals folding :func:`acmv.gru.gru_step` over the steps.
    """
    B, L, _ = P.shape
    Wx = T.concat([cell.M_z, cell.M_r, cell.M_h], axis=-1)
    bias = T.concat([cell.b_z, cell.b_r, cell.b_h], axis=-1)
    proj = T.matmul(P, Wx) + bias
    H = cell.hidden_dim
    h = T.Tensor(np.zeros((B, H)))
    for t in range(L):
        x_t = proj[:, t]
        xz, xr, xh = x_t[:, :H], x_t[:, H:2 * H], x_t[:, 2 * H:]
        z = T.sigmoid(xz + h @ cell.O_z)
        r = T.sigmoid(xr + h @ cell.O_r)
        h_cand = T.tanh(xh + r * (h @ cell.O_h))
        h = (1.0 - z) * h + z * h_cand
    return h


class AcmvModel(Module):
    def __init__(self, config, graphs, poi_profiles, views=VIEWS, fusion="attention", seed=0):
        views = tuple(views)
        if not views:
            raise ConfigError("at least one view is required")
        for v in views:
            if v not in VIEWS + (TEMPORAL,):
                raise ConfigError(f"unknown view {v!r}")
        if len(set(views)) != len(views):
            raise ConfigError(f"duplicate views in {views}")
        if fusion not in FUSION_MODES:
            raise ConfigError(f"fusion must be one of {FUSION_MODES}, got {fusion!r}")
        config.validate()
        self.config = config
        self.views = views
        self.fusion = fusion
        self.seed = seed
        poi_profiles = np.asarray(poi_profiles, dtype=np.float64)
        self.n_nodes = poi_profiles.shape[0]
        rng = np.random.default_rng(seed)
        self.context = ContextEmbedding(rng, "context", config.hour_dim, config.weather_dim,
                                        config.holiday_dim)
        self.blocks = []
        for v in views:
            graph = None if v == TEMPORAL else graphs[v]
            self.blocks.append(ViewBlock(v, graph, config, self.n_nodes, rng))
        self.head = None
        if fusion == "attention" and len(views) > 1:
            self.head = AttentionHead(len(views), config.context_dim, poi_profiles, rng)

    def forward_batch(self, inputs, contexts):
        """Scaled inputs (B, L, N) and context codes (B, L+1, 3).

        Returns ``(fused (B, N), q (B, N, V), weights (B, N, V))``.
        """
        inputs = np.asarray(inputs, dtype=np.float64)
        B, L, N = inputs.shape
        if N != self.n_nodes:
            raise ShapeError(f"inputs have {N} regions, model expects {self.n_nodes}")
        if L != self.config.window or contexts.shape[:2] != (B, L + 1):
            raise ShapeError(f"expected window {self.config.window} with {self.config.window + 1} "
                             f"contexts, got inputs {inputs.shape}, contexts {contexts.shape}")
        e = self.context.embed_codes(contexts)
        e_seq, e_next = e[:, :L], e[:, L]
        q = T.stack([block(inputs, e_seq) for block in self.blocks], axis=-1)
        k = len(self.blocks)
        if k == 1:
            w = T.Tensor(np.ones((B, N, 1)))
            fused = q[..., 0]
        elif self.head is not None:
            w = attention_weights(self.head, q, e_next)
            fused = fuse(q, w)
        else:
            w = T.Tensor(np.full((B, N, k), 1.0 / k))
            fused = average_fuse(q)
        return fused, q, w

    def state_dict(self):
        return {p.name: p.value.copy() for p in self.parameters()}

    def load_state_dict(self, values):
        assign_params(self.parameters(), values)


def build_variant(config, graphs, poi_profiles, views, fusion="attention", seed=0):
    """Model restricted to ``views``; fusion is ignored for a single view."""
    views = tuple(views)
    if not views:
        raise ConfigError("variant needs a nonempty set of views")
    return AcmvModel(config, graphs, poi_profiles, views, fusion, seed)


def forward(model, window):
    """Single scaled window -> (prediction (N,), q (N, V), weights (N, V))."""
    b = stack_windows([window])
    with no_tape():
        fused, q, w = model.forward_batch(b.inputs, b.contexts)
    return fused.value[0], q.value[0], w.value[0]


def mse_loss(pred, target):
    pred = T.as_tensor(pred)
    diff = pred - np.asarray(target, dtype=np.float64)
    return T.mean(T.square(diff))


def loss(pred, target):
    return float(mse_loss(pred, target).value)


def predict_batch(model, batch, chunk=256):
    """Scaled predictions, per-view outputs and weights for a WindowBatch."""
    preds, qs, ws = [], [], []
    with no_tape():
        for start in range(0, len(batch), chunk):
            sl = slice(start, start + chunk)
            fused, q, w = model.forward_batch(batch.inputs[sl], batch.contexts[sl])
            preds.append(fused.value)
            qs.append(q.value)
            ws.append(w.value)
    return np.concatenate(preds), np.concatenate(qs), np.concatenate(ws)


def predict(model, window, scaler):
    """Unscaled prediction frame and attention weights for a raw window."""
    if scaler is None or not scaler.fitted:
        raise StateError("predict needs a fitted scaler")
    scaled = SeriesWindow(scaler.scale(window.inputs), scaler.scale(window.target),
                          window.contexts, window.start)
    pred, _, w = forward(model, scaled)
    return PopulationFrame(scaler.unscale(pred), window.target_time), w


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)  # dicts per epoch
    best_epoch: int | None = None
    best_val_mae: float | None = None
    wall_time: float = 0.0

    COLUMNS = ("epoch", "train_loss", "val_mae", "val_rmse", "val_wape", "best_val_mae")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            for row in self.epochs:
                writer.writerow([row["epoch"]] + [repr(float(row[c])) for c in self.COLUMNS[1:]])


def train(model, train_batch, val_batch, train_cfg=None, optim_cfg=None, seed=0, scaler=None):
    """Mini-batch Adam on scaled MSE with early stopping on validation MAE.

    The model ends holding the parameters of its best validation epoch.
    """
    train_cfg = train_cfg or TrainConfig()
    optim_cfg = optim_cfg or OptimConfig()
    if len(train_batch) == 0 or len(val_batch) == 0:
        raise EmptyDatasetError("train and validation splits must be nonempty")
    report = TrainReport()
    if train_cfg.epochs <= 0:
        return report
    params = model.parameters()
    state = AdamState(lr=optim_cfg.lr, beta1=optim_cfg.beta1, beta2=optim_cfg.beta2,
                      epsilon=optim_cfg.epsilon)
    rng = np.random.default_rng([seed, 1])
    val_truth = val_batch.targets if scaler is None else scaler.unscale(val_batch.targets)
    best_state, best_mae, stale = None, np.inf, 0
    n = len(train_batch)
    started = time.perf_counter()
    for epoch in range(train_cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, train_cfg.batch_size):
            b = train_batch.take(order[start:start + train_cfg.batch_size])
            with Tape() as tape:
                pred, q, _ = model.forward_batch(b.inputs, b.contexts)
                batch_loss = mse_loss(pred, b.targets)
                value = float(batch_loss.value)
                if train_cfg.view_loss_weight and len(model.blocks) > 1:
                    # keep each view's output a forecast in its own right
                    view_loss = mse_loss(q, b.targets[..., None])
                    batch_loss = batch_loss + train_cfg.view_loss_weight * view_loss
                if not np.isfinite(value):
                    raise NumericError(f"non-finite training loss at epoch {epoch}")
                tape.backward(batch_loss)
            clip_grad_norm(params, optim_cfg.clip_norm)
            adam_step(params, state)
            total += value * len(b)
        val_pred, _, _ = predict_batch(model, val_batch)
        if scaler is not None:
            val_pred = scaler.unscale(val_pred)
        if not np.isfinite(val_pred).all():
            raise NumericError(f"non-finite validation predictions at epoch {epoch}")
        metrics = evaluate(val_pred, val_truth)
        if metrics.mae < best_mae:
            best_mae, stale = metrics.mae, 0
            best_state = model.state_dict()
            report.best_epoch = epoch
        else:
            stale += 1
        report.epochs.append({"epoch": epoch, "train_loss": total / n, "val_mae": metrics.mae,
                              "val_rmse": metrics.rmse, "val_wape": metrics.wape,
                              "best_val_mae": best_mae})
        if stale >= train_cfg.patience:
            break
    report.best_val_mae = float(best_mae)
    report.wall_time = time.perf_counter() - started
    if best_state is not None:
        model.load_state_dict(best_state)
    return report


# -- checkpoints -------------------------------------------------------------


def model_meta(model, scaler=None, extra=None):
    meta = {
        "model": asdict(model.config),
        "views": list(model.views),
        "fusion": model.fusion,
        "n_nodes": model.n_nodes,
        "seed": model.seed,
    }
    if scaler is not None and scaler.fitted:
        meta["scaler"] = {"q1": scaler.q1, "q3": scaler.q3}
    if extra:
        meta.update(extra)
    return meta


def save_model(model, path, scaler=None, extra=None):
    save_checkpoint(path, model.state_dict(), model_meta(model, scaler, extra))


def load_model(path, graphs, poi_profiles):
    """Rebuild a model from a checkpoint; returns ``(model, scaler, meta)``."""
    values, meta = load_checkpoint(path)
    cfg = ModelConfig(**meta["model"])
    if int(meta["n_nodes"]) != np.asarray(poi_profiles).shape[0]:
        raise ShapeError(f"checkpoint has {meta['n_nodes']} regions, scenario has "
                         f"{np.asarray(poi_profiles).shape[0]}")
    model = AcmvModel(cfg, graphs, poi_profiles, tuple(meta["views"]), meta["fusion"],
                      int(meta.get("seed", 0)))
    model.load_state_dict(values)
    sc = meta.get("scaler")
    scaler = Scaler(sc["q1"], sc["q3"]) if sc else None
    return model, scaler, meta


def clone(model):
    return copy.deepcopy(model)

"""Task heads, F1 metrics, the training loop, and the multi-trial protocol.

Training is full batch: the graph fits in memory, so every epoch runs one
forward/backward over all nodes, an Adam step, and a validation pass. Early
stopping keeps the parameter snapshot with the best validation F1 and that
snapshot is what gets evaluated on the test split. A run is a pure function
of (graph, config): every random choice derives from the config seed.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import gtn as gtn_mod
from . import hgt as hgt_mod
from . import rgat as rgat_mod
from .autodiff import Tensor, backward
from .errors import InvalidInput, NumericalFailure
from .graph import HeteroGraph, SyntheticSpec, gen_synthetic, make_splits, relation_adjacency
from .optim import Adam
from .spectral import (SpectralBasis, apply_pe, compute_basis, init_lpe_params, lpe_forward,
                       pe_to_feature_width, sign_augment)

ARCHITECTURES = ("rgat", "gtn", "hgt")
TASKS = ("node", "link")
SPLIT_RATIO = (0.70, 0.15, 0.15)


@dataclass(frozen=True)
class ModelConfig:
    architecture: str = "rgat"
    task: str = "node"
    use_lpe: bool = False
    pe_mode: str = "add"
    layers: int = 1
    feature_width: int = 16      # width after the per-type input projection
    hidden: int = 16
    rgat_heads: int = 2
    rgat_self_relation: bool = True
    gtn_channels: int = 2
    gtn_steps: int = 2
    hgt_heads: int = 4
    m: int = 16
    k: int = 16
    h_pe: int = 4
    pe_layers: int = 1
    k_ff: int = 32
    d_pe: int = 16
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 300
    patience: int = 30
    sign_flip: bool = True       # fresh eigenvector orientation per trial
    seed: int = 0

    def validate(self):
        if self.architecture not in ARCHITECTURES:
            raise InvalidInput(f"unknown architecture {self.architecture!r}")
        if self.task not in TASKS:
            raise InvalidInput(f"unknown task {self.task!r}")
        if self.pe_mode not in ("add", "concat"):
            raise InvalidInput(f"unknown pe mode {self.pe_mode!r}")
        for name in ("feature_width", "hidden", "m", "k", "h_pe", "k_ff", "d_pe",
                     "epochs", "patience", "rgat_heads", "gtn_channels", "gtn_steps",
                     "hgt_heads", "pe_layers"):
            if getattr(self, name) <= 0:
                raise InvalidInput(f"{name} must be positive")
        if self.layers < 0:
            raise InvalidInput("layers must be >= 0")
        if self.use_lpe and self.pe_mode == "add" and self.d_pe != self.feature_width:
            raise InvalidInput("add mode requires d_pe == feature_width")
        if self.k % self.h_pe != 0:
            raise InvalidInput("h_pe must divide k")
        return self


def config_hash(config):
    blob = json.dumps(asdict(config), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# heads and metrics


def node_head(z, w, b, labels, idx):
    """Linear map to class logits plus mean cross-entropy over ``idx``.

    Returns (loss tensor, predicted class per row); argmax resolves exact
    ties toward the lowest class id.
    """
    z = ad.as_tensor(z)
    labels = np.asarray(labels)
    c = w.shape[1]
    if labels[idx].size and (labels[idx].max() >= c or labels[idx].min() < 0):
        raise InvalidInput("class id outside [0, C)")
    logits = ad.add(ad.matmul(z, w), b)
    loss = ad.softmax_cross_entropy(ad.gather_rows(logits, idx), labels[idx])
    preds = np.argmax(logits.value, axis=1)
    return loss, preds


def link_head(z, pos_pairs, neg_pairs):
    """Dot-product edge scores through a logistic link, with binary
    cross-entropy against 1 for observed pairs and 0 for sampled ones."""
    z = ad.as_tensor(z)
    pairs = np.concatenate([pos_pairs, neg_pairs], axis=0)
    labels = np.concatenate([np.ones(len(pos_pairs)), np.zeros(len(neg_pairs))])
    zu = ad.gather_rows(z, pairs[:, 0])
    zv = ad.gather_rows(z, pairs[:, 1])
    scores = ad.reduce_sum(ad.mul(zu, zv), axis=1)
    loss = ad.logistic_cross_entropy(scores, labels)
    probs = 1.0 / (1.0 + np.exp(-np.clip(scores.value, -700, 700)))
    return loss, probs, labels


def f1_score(preds, truth, average="macro"):
    """F1 with macro, micro, or binary averaging.

    Macro averages per-class F1 over every class that shows up in either
    vector; classes absent from both are left out of the mean.
    """
    preds = np.asarray(preds)
    truth = np.asarray(truth)
    if preds.size == 0 or preds.shape != truth.shape:
        raise InvalidInput("need equal-length, non-empty prediction and truth vectors")
    if average == "binary":
        tp = int(np.sum((preds == 1) & (truth == 1)))
        fp = int(np.sum((preds == 1) & (truth != 1)))
        fn = int(np.sum((preds != 1) & (truth == 1)))
        denom = 2 * tp + fp + fn
        return 2.0 * tp / denom if denom else 0.0
    if average == "micro":
        return float(np.mean(preds == truth))
    if average != "macro":
        raise InvalidInput(f"unknown averaging {average!r}")
    classes = np.union1d(np.unique(preds), np.unique(truth))
    scores = []
    for c in classes:
        tp = int(np.sum((preds == c) & (truth == c)))
        fp = int(np.sum((preds == c) & (truth != c)))
        fn = int(np.sum((preds != c) & (truth == c)))
        denom = 2 * tp + fp + fn
        scores.append(2.0 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# model assembly


class GraphContext:
    """Dense views a trial reuses every epoch."""

    def __init__(self, g: HeteroGraph, config: ModelConfig, basis=None):
        self.g = g
        self.features = Tensor(g.features)
        self.type_masks = hgt_mod.node_type_masks(g)
        self.basis = basis
        self.rgat_masks = None
        self.gtn_candidates = None
        self.hgt_masks = None
        if config.architecture == "rgat" and config.layers > 0:
            self.rgat_masks = [relation_adjacency(g, r) > 0 for r in range(g.num_relations)]
            if config.rgat_self_relation:
                self.rgat_masks.append(np.eye(g.num_nodes, dtype=bool))
        elif config.architecture == "gtn" and config.layers > 0:
            self.gtn_candidates = gtn_mod.candidate_adjacencies(g)
        elif config.architecture == "hgt" and config.layers > 0:
            self.hgt_masks = [relation_adjacency(g, r) > 0 for r in range(g.num_relations)]


class Model:
    """Per-type input projection, optional positional encodings, a stack of
    attention layers, and a task head."""

    def __init__(self, g: HeteroGraph, config: ModelConfig, rng):
        config.validate()
        self.config = config
        f_raw = g.feature_width
        f = config.feature_width
        scale_in = np.sqrt(2.0 / (f_raw + f))
        self.input_proj = [Tensor(rng.normal(0.0, scale_in, (f_raw, f)), requires_grad=True)
                           for _ in range(len(g.type_names))]

        width = f + (config.d_pe if config.use_lpe and config.pe_mode == "concat" else 0)
        self._first_width = width
        self.layers = []
        for i in range(config.layers):
            w_in = width if i == 0 else self.out_width(i)
            if config.architecture == "rgat":
                n_rel = g.num_relations + (1 if config.rgat_self_relation else 0)
                self.layers.append(rgat_mod.init_rgat_params(
                    rng, n_rel, w_in, config.hidden, config.rgat_heads))
            elif config.architecture == "gtn":
                self.layers.append(gtn_mod.init_gtn_params(
                    rng, g.num_relations, w_in, config.hidden,
                    config.gtn_channels, config.gtn_steps))
            else:
                self.layers.append(hgt_mod.init_hgt_params(
                    rng, len(g.type_names), g.num_relations, w_in, config.hidden,
                    config.hgt_heads))

        z_width = self.out_width(config.layers)
        if config.task == "node":
            c = g.label_count
            if c < 2:
                raise InvalidInput("node task needs at least 2 classes")
            self.head_w = Tensor(rng.normal(0.0, np.sqrt(2.0 / (z_width + c)), (z_width, c)),
                                 requires_grad=True)
            self.head_b = Tensor(np.zeros(c), requires_grad=True)
        else:
            self.head_w = None
            self.head_b = None

        self.lpe = None
        if config.use_lpe:
            self.lpe = init_lpe_params(rng, config.k, config.h_pe, config.pe_layers,
                                       config.k_ff, config.d_pe, f)

    def out_width(self, depth):
        """Feature width after ``depth`` layers."""
        if depth == 0:
            return self._first_width
        if self.config.architecture == "hgt":
            return self._first_width  # residual layers preserve width
        return self.config.hidden

    def parameters(self):
        out = list(self.input_proj)
        for layer in self.layers:
            out.extend(layer.tensors())
        if self.head_w is not None:
            out.extend([self.head_w, self.head_b])
        if self.lpe is not None:
            out.extend(self.lpe.tensors())
        return out

    def state_dict(self):
        return [p.value.copy() for p in self.parameters()]

    def load_state_dict(self, state):
        for p, v in zip(self.parameters(), state):
            p.value[...] = v

    def encode(self, ctx: GraphContext, basis=None):
        cfg = self.config
        basis = basis if basis is not None else ctx.basis
        h = hgt_mod.typed_projection(ctx.features, self.input_proj, ctx.type_masks)
        if cfg.use_lpe:
            pe = lpe_forward(basis, self.lpe)
            if cfg.pe_mode == "add":
                pe = pe_to_feature_width(pe, self.lpe)
            h = apply_pe(h, pe, cfg.pe_mode)
        for layer in self.layers:
            if cfg.architecture == "rgat":
                h = rgat_mod.rgat_forward(h, ctx.g, layer, masks=ctx.rgat_masks)
            elif cfg.architecture == "gtn":
                h = gtn_mod.gtn_forward(h, ctx.g, layer, candidates=ctx.gtn_candidates)
            else:
                h = hgt_mod.hgt_forward(h, ctx.g, layer, masks=ctx.hgt_masks,
                                        type_masks=ctx.type_masks)
        return h


# ---------------------------------------------------------------------------
# training


@dataclass
class TrialResult:
    seed: int
    test_f1_macro: float
    test_f1_micro: float
    val_f1: float
    train_f1: float
    epochs: int
    loss_curve: list[float]
    test_f1_binary: float | None = None
    val_curve: list[float] = field(default_factory=list, repr=False)  # not serialized

    def headline(self, task):
        return self.test_f1_binary if task == "link" else self.test_f1_macro

    def to_dict(self):
        d = {
            "seed": self.seed,
            "test_f1_macro": self.test_f1_macro,
            "test_f1_micro": self.test_f1_micro,
            "val_f1": self.val_f1,
            "train_f1": self.train_f1,
            "epochs": self.epochs,
            "loss_curve": self.loss_curve,
        }
        if self.test_f1_binary is not None:
            d["test_f1_binary"] = self.test_f1_binary
        return d


@dataclass
class TrainReport:
    config_hash: str
    metric: str
    trials: list[TrialResult] = field(default_factory=list)
    mean: float = 0.0
    variance: float = 0.0

    def to_dict(self):
        return {
            "config_hash": self.config_hash,
            "metric": self.metric,
            "trials": [t.to_dict() for t in self.trials],
            "mean": self.mean,
            "variance": self.variance,
        }


def aggregate(values):
    """Mean and population variance."""
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    return mean, float(np.mean((values - mean) ** 2))


def _node_metrics(model, ctx, splits, basis):
    z = model.encode(ctx, basis)
    labels = ctx.g.labels
    _, preds = node_head(z, model.head_w, model.head_b, labels, splits.train)
    out = {}
    for name, idx in (("train", splits.train), ("val", splits.validation), ("test", splits.test)):
        out[name + "_macro"] = f1_score(preds[idx], labels[idx], "macro")
        out[name + "_micro"] = f1_score(preds[idx], labels[idx], "micro")
    return out


def _link_metrics(model, ctx, splits, basis):
    z = model.encode(ctx, basis)
    out = {}
    for name, pos, neg in (("train", splits.train_pos, splits.train_neg),
                           ("val", splits.val_pos, splits.val_neg),
                           ("test", splits.test_pos, splits.test_neg)):
        _, probs, labels = link_head(z, pos, neg)
        preds = (probs > 0.5).astype(int)
        out[name + "_binary"] = f1_score(preds, labels.astype(int), "binary")
        out[name + "_macro"] = f1_score(preds, labels.astype(int), "macro")
        out[name + "_micro"] = f1_score(preds, labels.astype(int), "micro")
    return out


def train(g: HeteroGraph, config: ModelConfig, basis: SpectralBasis | None = None) -> TrialResult:
    """Run one trial and return its report. ``basis`` may be precomputed by
    the caller to share the eigendecomposition across trials."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    splits = make_splits(g, SPLIT_RATIO, config.seed, config.task)

    active_basis = None
    if config.use_lpe:
        if basis is None:
            basis = compute_basis(g, config.m)
        active_basis = sign_augment(basis, rng) if config.sign_flip else basis

    model = Model(g, config, rng)
    ctx = GraphContext(g, config, active_basis)
    params = model.parameters()
    opt = Adam(params, config.lr, config.beta1, config.beta2, config.eps)

    val_key = "val_binary" if config.task == "link" else "val_macro"
    metrics_fn = _link_metrics if config.task == "link" else _node_metrics

    best_state = model.state_dict()
    best_val = -np.inf
    bad_epochs = 0
    curve = []
    val_curve = []
    epochs_run = 0
    for epoch in range(1, config.epochs + 1):
        z = model.encode(ctx)
        if config.task == "node":
            loss, _ = node_head(z, model.head_w, model.head_b, g.labels, splits.train)
        else:
            loss, _, _ = link_head(z, splits.train_pos, splits.train_neg)
        loss_val = float(loss.value)
        if not np.isfinite(loss_val):
            raise NumericalFailure(f"non-finite training loss at epoch {epoch}")
        curve.append(loss_val)
        opt.zero_grad()
        backward(loss)
        opt.step()
        epochs_run = epoch

        val_f1 = metrics_fn(model, ctx, splits, active_basis)[val_key]
        val_curve.append(val_f1)
        if val_f1 > best_val:
            best_val = val_f1
            best_state = model.state_dict()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                break

    model.load_state_dict(best_state)
    final = metrics_fn(model, ctx, splits, active_basis)
    if config.task == "link":
        return TrialResult(
            seed=config.seed,
            test_f1_macro=final["test_macro"], test_f1_micro=final["test_micro"],
            val_f1=final["val_binary"], train_f1=final["train_binary"],
            epochs=epochs_run, loss_curve=curve, test_f1_binary=final["test_binary"],
            val_curve=val_curve,
        )
    return TrialResult(
        seed=config.seed,
        test_f1_macro=final["test_macro"], test_f1_micro=final["test_micro"],
        val_f1=final["val_macro"], train_f1=final["train_macro"],
        epochs=epochs_run, loss_curve=curve, val_curve=val_curve,
    )


def run_trials(source, config: ModelConfig, n_trials: int = 5) -> TrainReport:
    """Train ``n_trials`` times with seeds base, base+1, ...; each trial draws
    its own splits, init, and eigenvector orientation. Reports the mean and
    population variance of the headline test F1."""
    if n_trials < 1:
        raise InvalidInput("n_trials must be >= 1")
    g = gen_synthetic(source) if isinstance(source, SyntheticSpec) else source
    basis = compute_basis(g, config.m) if config.use_lpe else None
    trials = []
    for i in range(n_trials):
        trials.append(train(g, replace(config, seed=config.seed + i), basis))
    metric = "binary_f1" if config.task == "link" else "macro_f1"
    mean, variance = aggregate([t.headline(config.task) for t in trials])
    return TrainReport(config_hash=config_hash(config), metric=metric,
                       trials=trials, mean=mean, variance=variance)

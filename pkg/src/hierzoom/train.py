"""Losses, optimizers, patch pretraining, the joint training loop and evaluation.

Training grows each graph with the ground-truth zoom labels (teacher
forcing); evaluation grows it from the model's own zoom predictions. The
objective per sample is ``L_graph + lambda * L_node``, averaged over a batch.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .hiergraph import ZoomDecision, expand, init_graph, node_feature
from .labels import zoom_label
from .metrics import roc_auc, zoom_pr
from .models import ModelBundle, cnn_forward, graph_head, init_cnn, zoom_head
from .synthdata import level_scales, sample_patches
from .tensor import Tensor, backward, binary_cross_entropy, concat, no_grad, softmax_rows

log = logging.getLogger(__name__)

TEACHER = "labels"
PREDICTED = "predictions"


# ------------------------------------------------------------------ losses


def loss_graph(y_hat, y):
    """Mean negated cross-entropy between malignancy probabilities and labels.

    ``y_hat`` is ``B x 2`` (benign, malignant) or a single pair.
    """
    if y_hat.ndim == 1:
        y_hat = y_hat.reshape(1, 2)
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if y_hat.shape[0] == 0:
        raise UsageError("loss_graph needs a non-empty batch")
    return binary_cross_entropy(y_hat[:, 1], y)


def loss_node(p, z, n_nodes=None, pos_weight=1.0):
    """Negated cross-entropy of zoom probabilities against zoom labels for one graph.

    ``p`` holds zoom probabilities (``M`` values or ``M x 2`` rows). The sum
    is divided by ``n_nodes``, which defaults to ``M``. ``pos_weight`` scales
    the terms of nodes labelled 1.
    """
    if p.ndim == 2:
        p = p[:, 1]
    z = np.asarray(z, dtype=np.float64)
    m = p.shape[0]
    if m == 0:
        raise UsageError("loss_node needs at least one prediction")
    n = m if n_nodes is None else n_nodes
    loss = binary_cross_entropy(p, z, pos_weight)
    return loss if n == m else loss * (m / n)


# -------------------------------------------------------------- optimizers


class SGD:
    def __init__(self, params, lr):
        self.params = list(params)
        self.lr = lr

    def step(self):
        for p in self.params:
            p.data -= self.lr * p.grad

    def state_dict(self):
        return {"kind": "sgd", "lr": self.lr}


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self):
        return {"kind": "adam", "lr": self.lr, "t": self.t}


def make_optimizer(name, params, lr):
    if name == "sgd":
        return SGD(params, lr)
    if name == "adam":
        return Adam(params, lr)
    raise UsageError(f"unknown optimizer {name!r}")


# ------------------------------------------------------------- pretraining


@dataclass
class PretrainResult:
    params: dict
    train_accuracy: float
    heldout_accuracy: float
    losses: list


def _patch_head(hdim, rng):
    bound = np.sqrt(3.0 / hdim)
    return (
        Tensor(rng.uniform(-bound, bound, size=(hdim, 2)), requires_grad=True),
        Tensor(np.zeros(2), requires_grad=True),
    )


def _patch_probs(model_cfg, params, head, x):
    h = cnn_forward(model_cfg, params, x)
    return softmax_rows(h @ head[0] + head[1])


def pretrain_patch_cnn(
    model_cfg, patches, labels, epochs, lr=1e-3, seed=0, batch_size=32, holdout=0.2
):
    """Fit one CNN (plus a throwaway 2-way head) to lesion/background patches.

    A seeded ``holdout`` fraction is kept out of training and its accuracy
    reported. With ``epochs == 0`` the seeded initialization is returned.
    """
    patches = np.asarray(patches, dtype=np.float64)
    labels = np.asarray(labels)
    if len(patches) == 0:
        raise UsageError("pretraining needs at least one patch")
    rng = np.random.default_rng([seed, 17])
    params = init_cnn(model_cfg, rng)
    head = _patch_head(model_cfg.hdim, rng)
    order = rng.permutation(len(patches))
    n_hold = int(round(holdout * len(patches))) if len(patches) > 1 else 0
    hold, fit = order[:n_hold], order[n_hold:]
    opt = Adam(list(params.values()) + list(head), lr)
    losses = []
    for _ in range(epochs):
        total = 0.0
        perm = fit[rng.permutation(len(fit))]
        for start in range(0, len(perm), batch_size):
            idx = perm[start : start + batch_size]
            for t in list(params.values()) + list(head):
                t.zero_grad()
            probs = _patch_probs(model_cfg, params, head, patches[idx])
            loss = binary_cross_entropy(probs[:, 1], labels[idx])
            backward(loss)
            opt.step()
            total += loss.item() * len(idx)
        losses.append(total / max(len(perm), 1))

    def accuracy(ids):
        if len(ids) == 0:
            return float("nan")
        with no_grad():
            pred = np.concatenate(
                [
                    _patch_probs(model_cfg, params, head, patches[ids[s : s + 256]]).data[:, 1]
                    for s in range(0, len(ids), 256)
                ]
            )
        return float(np.mean((pred > 0.5) == (labels[ids] == 1)))

    return PretrainResult(params, accuracy(fit), accuracy(hold), losses)


def pretrain_from_samples(cfg, samples):
    """Patch pretraining on the training images at every zoom level's scale."""
    m = cfg.model
    rng = np.random.default_rng([cfg.train.seed, 3])
    scales = level_scales(cfg.data.image_size, m.grid, m.levels, m.resize)
    patches, labels, _ = sample_patches(
        [s.image for s in samples], [s.mask for s in samples], m.resize, cfg.train.pretrain_patches, rng, scales
    )
    return pretrain_patch_cnn(m, patches, labels, cfg.train.pretrain_epochs, cfg.train.pretrain_lr, cfg.train.seed)


# ------------------------------------------------------------ graph passes


class FeatureCache:
    """Crops resized to ``D x D`` keyed by (sample id, region)."""

    def __init__(self, d):
        self.d = d
        self._store = {}

    def get(self, sample, region):
        key = (sample.id, region.x0, region.y0, region.width, region.height)
        arr = self._store.get(key)
        if arr is None:
            arr = node_feature(sample.image, region, self.d)
            self._store[key] = arr
        return arr

    def rows(self, sample, g, ids):
        return np.stack([self.get(sample, g.nodes[i].region) for i in ids])

    def __len__(self):
        return len(self._store)


@dataclass
class GraphPass:
    """Everything one forward pass over a sample produced."""

    graph: object
    y_hat: Tensor  # 1 x 2
    zoom_probs: list = field(default_factory=list)  # per level >= 2: M x 2 tensor
    zoom_levels: list = field(default_factory=list)
    zoom_labels: list = field(default_factory=list)  # per level: int array
    decisions: list = field(default_factory=list)  # per expanded level: list of ZoomDecision
    expansion: str = TEACHER

    def node_loss_terms(self):
        if not self.zoom_probs:
            return None, None
        p = concat([zp[:, 1] for zp in self.zoom_probs]) if len(self.zoom_probs) > 1 else self.zoom_probs[0][:, 1]
        return p, np.concatenate(self.zoom_labels)


def run_graph(bundle, sample, cfg, cache, teacher):
    """Grow the zoom graph of one sample and classify it.

    With ``teacher`` the frontier is expanded where the zoom label is 1;
    otherwise where the predicted zoom probability exceeds the no-zoom one.
    Zoom probabilities are produced for the frontier of every level >= 2.
    """
    m = cfg.model
    levels, s = m.levels, m.grid
    g = init_graph(sample.image.shape)
    h_parts = []
    out = GraphPass(graph=None, y_hat=None, expansion=TEACHER if teacher else PREDICTED)
    done = 0
    for level in range(1, levels + 1):
        frontier = g.frontier()
        new_ids = list(range(done, g.num_nodes))
        done = g.num_nodes
        if new_ids:
            h_parts.append(cnn_forward(m, bundle.cnn_params("cnn_node"), cache.rows(sample, g, new_ids)))
        z = np.array([zoom_label(sample.mask, g.nodes[i].region) for i in frontier], dtype=np.int64)
        probs = None
        if level >= 2 and frontier:
            h_all = concat(h_parts) if len(h_parts) > 1 else h_parts[0]
            probs = zoom_head(bundle, g.adjacency, h_all, frontier)
            out.zoom_probs.append(probs)
            out.zoom_levels.append(level)
            out.zoom_labels.append(z)
        if level == levels:
            break
        if level == 1:
            decisions = [ZoomDecision(0, True, 1.0)]
        else:
            pz = probs.data[:, 1] if probs is not None else np.zeros(len(frontier))
            pn = probs.data[:, 0] if probs is not None else np.ones(len(frontier))
            if teacher:
                decisions = [ZoomDecision(i, bool(zi), float(p)) for i, zi, p in zip(frontier, z, pz)]
            else:
                decisions = [ZoomDecision(i, bool(a > b), float(a)) for i, a, b in zip(frontier, pz, pn)]
        out.decisions.append(decisions)
        g = expand(g, decisions, s, m.node_cap, max_level=levels)
    x_all = cache.rows(sample, g, range(g.num_nodes))
    h_graph = cnn_forward(m, bundle.cnn_params("cnn_graph"), x_all)
    out.y_hat = graph_head(bundle, g.adjacency, h_graph)
    out.graph = g
    return out


# ---------------------------------------------------------------- training


@dataclass
class EpochStats:
    epoch: int
    l_graph: float
    l_node: float
    total: float
    train_auc: float

    def line(self):
        return (
            f"epoch={self.epoch} L_graph={self.l_graph:.6f} L_node={self.l_node:.6f} "
            f"total={self.total:.6f} train_auc={self.train_auc:.6f}"
        )


def sample_losses(bundle, sample, cfg, cache):
    res = run_graph(bundle, sample, cfg, cache, teacher=True)
    lg = loss_graph(res.y_hat, [sample.y])
    p, z = res.node_loss_terms()
    ln = loss_node(p, z, pos_weight=cfg.train.zoom_pos_weight) if p is not None else None
    return res, lg, ln


def train_epoch(bundle, samples, cfg, optimizer, rng, cache, epoch=0):
    """One pass over ``samples`` in a seeded order; one optimizer step per batch."""
    if not samples:
        raise UsageError("training needs a non-empty dataset")
    lam = cfg.train.lam
    bs = cfg.train.batch_size
    order = rng.permutation(len(samples))
    sum_g = sum_n = sum_t = 0.0
    scores, ys = [], []
    for start in range(0, len(order), bs):
        batch = [samples[i] for i in order[start : start + bs]]
        bundle.zero_grad()
        for sample in batch:
            res, lg, ln = sample_losses(bundle, sample, cfg, cache)
            total = lg if (ln is None or lam == 0) else lg + ln * lam
            backward(total * (1.0 / len(batch)))
            sum_g += lg.item()
            ln_v = ln.item() if ln is not None else 0.0
            sum_n += ln_v
            sum_t += lg.item() + lam * ln_v
            scores.append(float(res.y_hat.data[0, 1]))
            ys.append(sample.y)
        optimizer.step()
    n = len(samples)
    try:
        auc = roc_auc(scores, ys)
    except ValueError:
        auc = float("nan")
    return EpochStats(epoch, sum_g / n, sum_n / n, sum_t / n, auc)


def build_bundle(cfg, pretrained=None):
    bundle = ModelBundle(cfg.model, seed=cfg.train.seed)
    if pretrained is not None:
        for prefix in ("cnn_node", "cnn_graph"):
            bundle.load_cnn(prefix, pretrained)
    return bundle


def fit(bundle, samples, cfg, on_epoch=None, cache=None, start_epoch=0, rng=None, optimizer=None):
    """Run ``cfg.train.epochs`` epochs; returns (stats list, rng, optimizer)."""
    cache = cache or FeatureCache(cfg.model.resize)
    rng = rng or np.random.default_rng([cfg.train.seed, 1])
    optimizer = optimizer or make_optimizer(cfg.train.optimizer, bundle.parameters(), cfg.train.lr)
    history = []
    for epoch in range(start_epoch + 1, start_epoch + cfg.train.epochs + 1):
        stats = train_epoch(bundle, samples, cfg, optimizer, rng, cache, epoch)
        history.append(stats)
        log.info(stats.line())
        if on_epoch is not None:
            on_epoch(stats, rng)
    return history, rng, optimizer


# -------------------------------------------------------------- evaluation


def infer(bundle, sample, cfg, cache=None, teacher=False):
    cache = cache or FeatureCache(cfg.model.resize)
    with no_grad():
        return run_graph(bundle, sample, cfg, cache, teacher=teacher)


def evaluate(bundle, samples, cfg, cache=None, teacher=False):
    """Scores, AUC, zoom precision/recall and node counts over ``samples``.

    Graphs grow from predicted zoom decisions unless ``teacher`` is set.
    ``zoom_precision``/``zoom_recall`` refer to the deepest level whose
    predictions drive expansion (level R-1, or level 2 when R == 2).
    """
    cache = cache or FeatureCache(cfg.model.resize)
    levels = cfg.model.levels
    key_level = max(levels - 1, 2)
    scores, ys, counts = [], [], []
    per_level = {}
    for sample in samples:
        res = infer(bundle, sample, cfg, cache, teacher)
        scores.append(float(res.y_hat.data[0, 1]))
        ys.append(int(sample.y))
        counts.append(res.graph.num_nodes)
        for lvl, probs, z in zip(res.zoom_levels, res.zoom_probs, res.zoom_labels):
            pred = probs.data[:, 1] > probs.data[:, 0]
            acc = per_level.setdefault(lvl, ([], [], []))
            acc[0].extend(pred.tolist())
            acc[1].extend(z.tolist())
            acc[2].extend(probs.data[:, 1].tolist())
    metrics = {
        "n_samples": len(samples),
        "expansion": TEACHER if teacher else PREDICTED,
        "mean_nodes": float(np.mean(counts)) if counts else 0.0,
        "max_nodes": int(max(counts)) if counts else 0,
        "scores": scores,
        "labels": ys,
    }
    try:
        metrics["auc"] = roc_auc(scores, ys)
    except ValueError:
        metrics["auc"] = float("nan")
    all_pred, all_true = [], []
    for lvl in sorted(per_level):
        pred, true, prob = per_level[lvl]
        prec, rec = zoom_pr(pred, true)
        metrics[f"zoom_precision_l{lvl}"] = prec
        metrics[f"zoom_recall_l{lvl}"] = rec
        if 0 < sum(true) < len(true):
            metrics[f"zoom_auc_l{lvl}"] = roc_auc(prob, true)
        all_pred += pred
        all_true += true
    if key_level in per_level:
        metrics["zoom_precision"], metrics["zoom_recall"] = zoom_pr(*per_level[key_level][:2])
    if all_pred:
        metrics["zoom_precision_all"], metrics["zoom_recall_all"] = zoom_pr(all_pred, all_true)
    return metrics

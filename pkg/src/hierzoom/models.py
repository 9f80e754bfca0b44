"""The four learned components and their forward passes.

``cnn_node``/``gat_node`` score frontier nodes for zooming; ``cnn_graph``/
``gat_graph`` plus ``out_proj`` classify the finished graph. Both CNNs share
one architecture but own separate parameters.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError, UsageError
from .tensor import (
    Tensor,
    as_tensor,
    conv2d,
    elu,
    leaky_relu,
    maxpool2d,
    relu,
    reshape,
    softmax_rows,
)

CNN_PREFIXES = ("cnn_node", "cnn_graph")


@dataclass(frozen=True)
class GatLayerParams:
    weight: Tensor  # h_in x h_out
    att: Tensor  # 2*h_out x 1: source half then neighbour half
    alpha: float = 0.2


def _uniform(rng, shape, fan_in, gain):
    bound = np.sqrt(gain / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def cnn_shapes(cfg):
    """Named parameter shapes of one CNN, in creation order."""
    shapes = []
    c_in, side = 1, cfg.resize
    for i, f in enumerate(cfg.conv_filters):
        shapes.append((f"conv{i}.weight", (f, c_in, cfg.kernel, cfg.kernel)))
        shapes.append((f"conv{i}.bias", (f,)))
        c_in, side = f, side // 2
    shapes.append(("dense.weight", (c_in * side * side, cfg.hdim)))
    shapes.append(("dense.bias", (cfg.hdim,)))
    return shapes


def init_cnn(cfg, rng):
    params = {}
    for name, shape in cnn_shapes(cfg):
        if name.endswith("bias"):
            params[name] = Tensor(np.zeros(shape), requires_grad=True)
        else:
            fan_in = int(np.prod(shape[1:])) if name.startswith("conv") else shape[0]
            params[name] = _uniform(rng, shape, fan_in, 6.0)
    return params


class ModelBundle:
    """All trainable tensors, keyed by dotted names in a fixed order."""

    def __init__(self, cfg, seed=0, params=None):
        self.cfg = cfg
        if params is not None:
            self.params = dict(params)
            return
        rng = np.random.default_rng(seed)
        h = cfg.hdim
        p = {}
        for name, t in init_cnn(cfg, rng).items():
            p[f"cnn_node.{name}"] = t
        for i in range(cfg.gat_layers):
            p[f"gat_node.layer{i}.weight"] = _uniform(rng, (h, h), h, 6.0)
            p[f"gat_node.layer{i}.att"] = _uniform(rng, (2 * h, 1), h, 3.0)
        p["gat_node.head.weight"] = _uniform(rng, (h, 2), h, 3.0)
        p["gat_node.head.bias"] = Tensor(np.zeros(2), requires_grad=True)
        for name, t in init_cnn(cfg, rng).items():
            p[f"cnn_graph.{name}"] = t
        for i in range(cfg.gat_layers):
            p[f"gat_graph.layer{i}.weight"] = _uniform(rng, (h, h), h, 6.0)
            p[f"gat_graph.layer{i}.att"] = _uniform(rng, (2 * h, 1), h, 3.0)
        p["out_proj.weight"] = _uniform(rng, (h, 2), h, 3.0)
        self.params = p

    def __getitem__(self, name):
        return self.params[name]

    def parameters(self):
        return list(self.params.values())

    def named_parameters(self):
        return list(self.params.items())

    def num_parameters(self):
        return int(sum(t.size for t in self.params.values()))

    def zero_grad(self):
        for t in self.params.values():
            t.zero_grad()

    def cnn_params(self, prefix):
        plen = len(prefix) + 1
        return {k[plen:]: v for k, v in self.params.items() if k.startswith(prefix + ".")}

    def load_cnn(self, prefix, weights):
        """Copy CNN weights (name -> array) into the ``prefix`` CNN."""
        for name, value in weights.items():
            target = self.params[f"{prefix}.{name}"]
            value = np.asarray(value.data if isinstance(value, Tensor) else value)
            if value.shape != target.shape:
                raise ConfigurationError(
                    f"{prefix}.{name}: pretrained shape {value.shape} != model shape {target.shape}"
                )
            target.data[...] = value

    def gat_layers(self, prefix):
        return [
            GatLayerParams(
                self.params[f"{prefix}.layer{i}.weight"],
                self.params[f"{prefix}.layer{i}.att"],
                self.cfg.leaky_alpha,
            )
            for i in range(self.cfg.gat_layers)
        ]


def _activation(name):
    return elu if name == "elu" else relu


def cnn_forward(cfg, params, x):
    """Apply the conv/pool/dense stack to each ``D x D`` row of ``x`` independently."""
    x = as_tensor(x)
    d = cfg.resize
    if x.ndim != 3 or x.shape[1:] != (d, d):
        raise ConfigurationError(f"CNN expects N x {d} x {d} input, got {x.shape}")
    act = _activation(cfg.activation)
    n = x.shape[0]
    h = reshape(x, (n, 1, d, d))
    for i in range(len(cfg.conv_filters)):
        h = conv2d(h, params[f"conv{i}.weight"], params[f"conv{i}.bias"], 1, cfg.kernel // 2)
        h = maxpool2d(act(h), 2)
    h = reshape(h, (n, -1))
    return act(h @ params["dense.weight"] + params["dense.bias"])


def gat_layer(p, adjacency, h):
    """Single-head graph attention restricted to the adjacency pattern.

    ``e_ij = LeakyReLU(a_src . Wh_i + a_dst . Wh_j)`` for neighbours j,
    softmax over j, then ``elu(sum_j alpha_ij Wh_j)``.
    """
    adjacency = np.asarray(adjacency)
    n = h.shape[0]
    if adjacency.shape != (n, n):
        raise DimensionError(f"adjacency {adjacency.shape} does not match {n} node features")
    wh = h @ p.weight
    out_dim = wh.shape[1]
    src = wh @ p.att[:out_dim]
    dst = wh @ p.att[out_dim:]
    e = leaky_relu(src + reshape(dst, (1, n)), p.alpha)
    attn = softmax_rows(e, mask=adjacency > 0)
    return elu(attn @ wh)


def attention_weights(p, adjacency, h):
    """The normalized attention matrix of :func:`gat_layer` (no tape)."""
    adjacency = np.asarray(adjacency)
    wh = h.data @ p.weight.data
    k = wh.shape[1]
    e = (wh @ p.att.data[:k]) + (wh @ p.att.data[k:]).T
    e = np.where(e > 0, e, p.alpha * e)
    return softmax_rows(Tensor(e), mask=adjacency > 0).data


def gat_stack(layers, adjacency, h):
    for p in layers:
        h = gat_layer(p, adjacency, h)
    return h


def zoom_head(bundle, adjacency, h_cnn, rows):
    """Zoom probabilities ``(len(rows), 2)`` given CNN_node features of every node."""
    h = gat_stack(bundle.gat_layers("gat_node"), adjacency, h_cnn)
    logits = h[np.asarray(rows, dtype=np.intp)] @ bundle["gat_node.head.weight"]
    return softmax_rows(logits + bundle["gat_node.head.bias"])


def node_zoom_forward(bundle, g, x_all, rows=None):
    """(no-zoom, zoom) probabilities for the frontier nodes of ``g``.

    ``x_all`` holds the features of every node in ``g``; attention runs over
    the whole graph and the rows of the deepest level are read off.
    """
    x_all = as_tensor(x_all)
    if x_all.shape[0] != g.num_nodes:
        raise DimensionError(f"{x_all.shape[0]} feature rows for {g.num_nodes} nodes")
    rows = g.frontier() if rows is None else rows
    h = cnn_forward(bundle.cfg, bundle.cnn_params("cnn_node"), x_all)
    return zoom_head(bundle, g.adjacency, h, rows)


def graph_head(bundle, adjacency, h_cnn):
    h = gat_stack(bundle.gat_layers("gat_graph"), adjacency, h_cnn)
    pooled = h.mean(axis=0, keepdims=True)
    return softmax_rows(pooled @ bundle["out_proj.weight"])


def graph_forward(bundle, g, x_all, final_level=None):
    """Graph-level (benign, malignant) probabilities as a ``1 x 2`` tensor."""
    final_level = bundle.cfg.levels if final_level is None else final_level
    if g.current_level != final_level:
        raise UsageError(f"graph is at level {g.current_level}; classification needs level {final_level}")
    x_all = as_tensor(x_all)
    if x_all.shape[0] != g.num_nodes:
        raise DimensionError(f"{x_all.shape[0]} feature rows for {g.num_nodes} nodes")
    h = cnn_forward(bundle.cfg, bundle.cnn_params("cnn_graph"), x_all)
    return graph_head(bundle, g.adjacency, h)


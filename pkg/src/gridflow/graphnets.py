"""Propagation cores (FullGN, GGNN, GAT), random-walk baselines, and the
model harness combining them with the explicit attention-flow mechanism.

Node states h = [attention channels : auxiliary channels]. The source node
starts with its attention channels at 1/sqrt(d') and every other node at
zero; auxiliary channels start from a tanh feedforward of the stationary
node embeddings. Regular variants read predictions out of the attention
channels by softmax of their inner product with the reference vector;
explicit-flow variants read the final focused attention directly.

The batch axis vectorizes (source, destination) examples over the shared
graph and shared parameters.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import attnflow
from . import autodiff as ad
from .attnflow import TransitionParams
from .grid import GridGraph, N_EDGE_TYPES

CORES = ("fullgn", "ggnn", "gat", "rw_stationary", "rw_dynamic")
ACTINGS = ("regular", "noact", "mul", "mulmlp")

MODEL_NAMES = [
    f"{core}{suffix}"
    for core in ("fullgn", "ggnn", "gat")
    for suffix in ("", "-noact", "-mul", "-mulmlp")
] + ["rw-stationary", "rw-dynamic"]


@dataclass
class ModelConfig:
    core: str = "ggnn"
    acting: str = "regular"  # regular | noact | mul | mulmlp
    dims: int = 40
    attn_dims: int = 8
    heads: int = 5
    steps: int = 16
    leaky_slope: float = 0.2
    dtype: str = "float32"

    def __post_init__(self):
        if self.core not in CORES:
            raise ValueError(f"unknown core {self.core!r}")
        if self.acting not in ACTINGS:
            raise ValueError(f"unknown acting {self.acting!r}")
        if not self.attn_dims < self.dims:
            raise ValueError("attn_dims must be smaller than dims")
        if self.core == "gat" and self.dims % self.heads:
            raise ValueError("gat needs dims divisible by heads")

    @property
    def name(self) -> str:
        if self.core.startswith("rw_"):
            return self.core.replace("_", "-")
        return self.core if self.acting == "regular" else f"{self.core}-{self.acting}"

    @property
    def explicit_flow(self) -> bool:
        return self.core.startswith("rw_") or self.acting != "regular"

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    @classmethod
    def from_name(cls, name: str, **kw) -> "ModelConfig":
        name = name.lower().replace("_", "-")
        if name in ("rw-stationary", "rw-dynamic"):
            return cls(core=name.replace("-", "_"), acting="noact", **kw)
        core, _, acting = name.partition("-")
        return cls(core=core, acting=acting or "regular", **kw)


class GraphTensors:
    """Index arrays for one selfloop-augmented graph, edges grouped by type.

    Compact node indices 0..n-1 follow ascending original node id.
    """

    def __init__(self, graph: GridGraph):
        if not graph.has_selfloops():
            raise ValueError("model graphs must be selfloop-augmented")
        self.graph = graph
        self.node_ids = graph.nodes.copy()
        self.n = len(self.node_ids)
        self.n_types = N_EDGE_TYPES
        self.id_to_index = {int(v): i for i, v in enumerate(self.node_ids)}

        edges = graph.edges
        order = np.lexsort((edges[:, 1], edges[:, 0], edges[:, 2]))
        edges = edges[order]
        self.src_ids = edges[:, 0]
        self.dst_ids = edges[:, 1]
        self.etype = edges[:, 2].astype(np.int64)
        self.src = np.array([self.id_to_index[v] for v in self.src_ids.tolist()])
        self.dst = np.array([self.id_to_index[v] for v in self.dst_ids.tolist()])
        self.n_edges = len(edges)

        self.sender_index = ad.SegmentIndex(self.src, self.n)
        self.receiver_index = ad.SegmentIndex(self.dst, self.n)
        self.src_type = self.src * self.n_types + self.etype
        self.dst_type = self.dst * self.n_types + self.etype
        self.src_type_index = ad.SegmentIndex(self.src_type, self.n * self.n_types)
        self.dst_type_index = ad.SegmentIndex(self.dst_type, self.n * self.n_types)
        self.etype_index = ad.SegmentIndex(self.etype, self.n_types)

        starts = np.searchsorted(self.etype, np.arange(self.n_types))
        stops = np.append(starts[1:], self.n_edges)
        self.type_slices = [(int(a), int(b)) for a, b in zip(starts, stops)]

        if np.any(self.sender_index.counts == 0):
            raise ValueError("every node needs an outgoing edge (selfloop missing?)")

    def to_indices(self, node_ids) -> np.ndarray:
        return np.array([self.id_to_index[int(v)] for v in np.atleast_1d(node_ids)])


def gru(h, m_bar, u_pre, params, d):
    """GRU cell over input x = [m_bar : u]; h' = (1-z) h + z tanh(.).

    Weight blocks are split by input so the embedding contribution u_pre =
    u @ Wu + b (constant across steps) is computed once per forward:
        r, z = sigmoid(m_bar Wm[:, :2d] + u_pre[:2d] + h Wh)
        hh   = tanh(m_bar Wm[:, 2d:] + u_pre[2d:] + (r*h) Whh)
    """
    pre = ad.add(ad.matmul(m_bar, params["gru.Wm"]), u_pre)
    rz = ad.sigmoid(ad.add(ad.slice_axis(pre, -1, 0, 2 * d),
                           ad.matmul(h, params["gru.Wh"])))
    r = ad.slice_axis(rz, -1, 0, d)
    z = ad.slice_axis(rz, -1, d, 2 * d)
    hh = ad.tanh(ad.add(ad.slice_axis(pre, -1, 2 * d, 3 * d),
                        ad.matmul(ad.mul(r, h), params["gru.Whh"])))
    return ad.add(h, ad.mul(z, ad.add(hh, ad.mul(h, -1.0))))


def implicit_readout(h: ad.Tensor, attn_dims: int) -> ad.Tensor:
    """softmax over nodes of the attention-channel score <h_dot, 1/sqrt(d')>."""
    scores = ad.mul(
        ad.tsum(ad.slice_axis(h, -1, 0, attn_dims), axis=-1),
        1.0 / np.sqrt(attn_dims),
    )
    return ad.softmax(scores, axis=-1)


def init_node_states(gt: GraphTensors, params, src_indices, attn_dims, dtype):
    """h0 = [source indicator channels : tanh(embed @ W + b)] per example."""
    b = len(src_indices)
    hdot = np.zeros((b, gt.n, attn_dims), dtype=dtype)
    hdot[np.arange(b), np.asarray(src_indices)] = 1.0 / np.sqrt(attn_dims)
    aux = ad.tanh(ad.add(ad.matmul(params["embed"], params["init.W"]),
                         params["init.b"]))
    aux_b = ad.add(aux, np.zeros((b, 1, 1), dtype=dtype))
    return ad.concat([ad.Tensor(hdot), aux_b], axis=-1)


@dataclass
class ForwardResult:
    probs: ad.Tensor  # (B, n) prediction distribution over nodes
    focused: list = field(default_factory=list)  # per-step (B, n) arrays
    flowing: list = field(default_factory=list)  # per-step (B, E) arrays


class Model:
    def __init__(self, config: ModelConfig, graph_or_tensors, seed: int = 0):
        self.cfg = config
        self.gt = (graph_or_tensors if isinstance(graph_or_tensors, GraphTensors)
                   else GraphTensors(graph_or_tensors))
        self.params: dict[str, ad.Tensor] = {}
        self._build_params(np.random.default_rng(seed))

    # -- parameters -------------------------------------------------------

    def _param(self, name, value):
        t = ad.Tensor(value.astype(self.cfg.np_dtype), requires_grad=True)
        self.params[name] = t
        return t

    def _glorot(self, rng, shape, fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape)

    def _typed_glorot(self, rng, n_types, fan_in, fan_out):
        """Stack of per-type blocks, each with its own Glorot fan."""
        return np.stack(
            [self._glorot(rng, (fan_in, fan_out), fan_in, fan_out)
             for _ in range(n_types)]
        )

    def _build_params(self, rng):
        cfg, gt = self.cfg, self.gt
        d, dp, nt = cfg.dims, cfg.attn_dims, gt.n_types
        self._param("embed", self._glorot(rng, (gt.n, d), d, d))
        self._param("init.W", self._glorot(rng, (d, d - dp), d, d - dp))
        self._param("init.b", np.zeros(d - dp))

        if cfg.core == "fullgn":
            self._param("msg.W", self._typed_glorot(rng, nt, 3 * d, d))
            self._param("msg.b", np.zeros((nt, d)))
            self._param("node.W", self._glorot(rng, (4 * d, d), 4 * d, d))
            self._param("node.b", np.zeros(d))
            self._param("global.W", self._glorot(rng, (3 * d, d), 3 * d, d))
            self._param("global.b", np.zeros(d))
        elif cfg.core == "ggnn":
            self._param("msg.W", self._typed_glorot(rng, nt, d, d))
            self._param("msg.b", np.zeros((nt, d)))
            self._build_gru(rng, x_dim=2 * d)
        elif cfg.core == "gat":
            hw = d // cfg.heads
            blocks = np.stack(
                [self._glorot(rng, (d, cfg.heads * hw), d, hw) for _ in range(nt)]
            )  # (nt, d, K*hw)
            self._param("gat.W", blocks.transpose(1, 0, 2).reshape(d, nt * d))
            self._param("gat.b", np.zeros(nt * d))
            self._param("gat.a1", self._glorot(rng, (cfg.heads, hw), 2 * hw, 1))
            self._param("gat.a2", self._glorot(rng, (cfg.heads, hw), 2 * hw, 1))
            self._build_gru(rng, x_dim=2 * d)
        elif cfg.core == "rw_dynamic":
            self._param("node.W", self._glorot(rng, (3 * d, d), 3 * d, d))
            self._param("node.b", np.zeros(d))
            self._param("global.W", self._glorot(rng, (2 * d, d), 2 * d, d))
            self._param("global.b", np.zeros(d))

        if cfg.explicit_flow:
            self._param("trans.w1", self._glorot(rng, (d, nt), d, 1))
            self._param("trans.w2", self._glorot(rng, (d, nt), d, 1))
            self._param("trans.wo", self._typed_glorot(rng, nt, d, d))
            self._param("trans.b", np.zeros(nt))
        if cfg.acting == "mulmlp":
            self._param("act.W", self._glorot(rng, (d, d), d, d))
            self._param("act.b", np.zeros(d))

    def _build_gru(self, rng, x_dim):
        # Each gate is logically a (x_dim + d) -> d linear map; its rows are
        # stored split by input block (m_bar / u / h) for the fused cell.
        d = self.cfg.dims
        gates = [self._glorot(rng, (x_dim + d, d), x_dim + d, d)
                 for _ in range(3)]  # r, z, hh
        self._param("gru.Wm", np.concatenate([g[:d] for g in gates], axis=1))
        self._param("gru.Wu", np.concatenate([g[d:2 * d] for g in gates],
                                             axis=1))
        self._param("gru.Wh", np.concatenate([g[2 * d:] for g in gates[:2]],
                                             axis=1))
        self._param("gru.Whh", gates[2][2 * d:])
        self._param("gru.b", np.zeros(3 * d))

    def transition_params(self) -> TransitionParams:
        return TransitionParams(
            w_src=self.params["trans.w1"],
            w_dst=self.params["trans.w2"],
            w_outer=self.params["trans.wo"],
            bias=self.params["trans.b"],
        )

    # -- propagation steps -------------------------------------------------

    def _broadcast_embed(self, b):
        return ad.add(self.params["embed"],
                      np.zeros((b, 1, 1), dtype=self.cfg.np_dtype))

    def _messages_fullgn(self, h, g):
        gt, p = self.gt, self.params
        b = h.data.shape[0]
        h_i = ad.take(h, gt.src, axis=1, scatter=gt.sender_index)
        h_j = ad.take(h, gt.dst, axis=1, scatter=gt.receiver_index)
        g_e = ad.add(ad.reshape(g, (b, 1, -1)),
                     np.zeros((1, gt.n_edges, 1), dtype=self.cfg.np_dtype))
        feats = ad.concat([h_i, h_j, g_e], axis=-1)
        chunks = []
        for t, (lo, hi) in enumerate(gt.type_slices):
            if lo == hi:
                continue
            w = ad.reshape(ad.slice_axis(p["msg.W"], 0, t, t + 1),
                           p["msg.W"].data.shape[1:])
            bias = ad.reshape(ad.slice_axis(p["msg.b"], 0, t, t + 1), (-1,))
            part = ad.slice_axis(feats, 1, lo, hi)
            chunks.append(ad.tanh(ad.add(ad.matmul(part, w), bias)))
        return ad.concat(chunks, axis=1)

    def _messages_ggnn(self, h_src_g):
        gt, p = self.gt, self.params
        return ad.typed_affine(h_src_g, p["msg.W"], p["msg.b"], gt.type_slices)

    def _messages_gat(self, h):
        gt, p, cfg = self.gt, self.params, self.cfg
        k, hw = cfg.heads, cfg.dims // cfg.heads
        z_all = ad.reshape(ad.add(ad.matmul(h, p["gat.W"]), p["gat.b"]),
                           (-1, gt.n * gt.n_types, cfg.dims))
        z_i = ad.take(z_all, gt.src_type, axis=1, scatter=gt.src_type_index)
        z_j = ad.take(z_all, gt.dst_type, axis=1, scatter=gt.dst_type_index)
        e_shape = (-1, gt.n_edges, k, hw)
        zh_i, zh_j = ad.reshape(z_i, e_shape), ad.reshape(z_j, e_shape)
        logits = ad.add(ad.tsum(ad.mul(zh_i, p["gat.a1"]), axis=-1),
                        ad.tsum(ad.mul(zh_j, p["gat.a2"]), axis=-1))
        alpha = ad.segment_softmax(
            ad.leaky_relu(logits, cfg.leaky_slope),
            gt.dst, axis=1, index=gt.receiver_index,
        )
        weighted = ad.mul(zh_i, ad.reshape(alpha, alpha.data.shape + (1,)))
        return ad.reshape(weighted, (-1, gt.n_edges, cfg.dims))

    def _aggregate(self, messages):
        return ad.segment_sum(messages, self.gt.dst, axis=1,
                              index=self.gt.receiver_index)

    def _node_update(self, h, m_bar, u_b, u_pre, g):
        """Core-specific node (and global) update; returns (h', g')."""
        cfg, p = self.cfg, self.params
        b = h.data.shape[0]
        if cfg.core == "fullgn":
            g_n = ad.add(ad.reshape(g, (b, 1, -1)),
                         np.zeros((1, self.gt.n, 1), dtype=cfg.np_dtype))
            feats = ad.concat([h, m_bar, u_b, g_n], axis=-1)
            h_next = ad.tanh(ad.add(ad.matmul(feats, p["node.W"]), p["node.b"]))
            gfeat = ad.concat([g, ad.tmean(h, axis=1), ad.tmean(m_bar, axis=1)],
                              axis=-1)
            g_next = ad.tanh(ad.add(ad.matmul(gfeat, p["global.W"]), p["global.b"]))
            return h_next, g_next
        return gru(h, m_bar, u_pre, p, cfg.dims), g

    def _rw_dynamic_update(self, h, u_b, g, focused):
        cfg, p = self.cfg, self.params
        b = h.data.shape[0]
        g_n = ad.add(ad.reshape(g, (b, 1, -1)),
                     np.zeros((1, self.gt.n, 1), dtype=cfg.np_dtype))
        feats = ad.concat([h, u_b, g_n], axis=-1)
        h_next = ad.tanh(ad.add(ad.matmul(feats, p["node.W"]), p["node.b"]))
        h_bar = ad.tsum(ad.mul(h, ad.reshape(focused, focused.data.shape + (1,))),
                        axis=1)
        gfeat = ad.concat([g, h_bar], axis=-1)
        g_next = ad.tanh(ad.add(ad.matmul(gfeat, p["global.W"]), p["global.b"]))
        return h_next, g_next

    # -- forward -----------------------------------------------------------

    def forward(self, src_indices, trace: bool = False) -> ForwardResult:
        cfg, gt, p = self.cfg, self.gt, self.params
        src = np.asarray(src_indices, dtype=np.int64)
        b = len(src)
        dtype = cfg.np_dtype
        result = ForwardResult(probs=None)

        focused = None
        if cfg.explicit_flow:
            focused = attnflow.onehot_focus(gt.n, src, dtype)
            if trace:
                result.focused.append(focused.data.copy())

        if cfg.core == "rw_stationary":
            logits = attnflow.transition_logits(p["embed"], gt,
                                                self.transition_params())
            transition = attnflow.transition_matrix(logits, gt)
            for _ in range(cfg.steps):
                flowing, focused = attnflow.flow_step(focused, transition, gt)
                if trace:
                    result.flowing.append(flowing.data.copy())
                    result.focused.append(focused.data.copy())
            result.probs = focused
            return result

        h = init_node_states(gt, p, src, cfg.attn_dims, dtype)
        u_b = self._broadcast_embed(b)
        g = ad.Tensor(np.zeros((b, cfg.dims), dtype=dtype))
        u_pre = None
        if cfg.core in ("ggnn", "gat"):
            u_pre = ad.add(ad.matmul(u_b, p["gru.Wu"]), p["gru.b"])

        for _ in range(cfg.steps):
            flowing = None
            gathered = h_src_g = None
            if cfg.core == "ggnn":
                # Shared between messages and transition logits.
                h_src_g = ad.take(h, gt.src, axis=1, scatter=gt.sender_index)
                if cfg.explicit_flow:
                    h_dst_g = ad.take(h, gt.dst, axis=1,
                                      scatter=gt.receiver_index)
                    gathered = (h_src_g, h_dst_g)
            if cfg.explicit_flow:
                logits = attnflow.transition_logits(
                    h, gt, self.transition_params(), gathered=gathered)
                transition = attnflow.transition_matrix(logits, gt)
                flowing, focused_next = attnflow.flow_step(focused, transition, gt)
                if trace:
                    result.flowing.append(flowing.data.copy())
                    result.focused.append(focused_next.data.copy())

            if cfg.core == "rw_dynamic":
                h, g = self._rw_dynamic_update(h, u_b, g, focused)
            else:
                if cfg.core == "fullgn":
                    messages = self._messages_fullgn(h, g)
                elif cfg.core == "ggnn":
                    messages = self._messages_ggnn(h_src_g)
                else:
                    messages = self._messages_gat(h)
                if cfg.explicit_flow and cfg.acting != "regular":
                    messages = attnflow.attend_message(
                        cfg.acting, flowing, messages,
                        p.get("act.W"), p.get("act.b"),
                    )
                m_bar = self._aggregate(messages)
                h, g = self._node_update(h, m_bar, u_b, u_pre, g)

            if cfg.explicit_flow:
                focused = focused_next
            self._check_finite(h)

        result.probs = focused if cfg.explicit_flow else implicit_readout(
            h, cfg.attn_dims)
        return result

    def _check_finite(self, h):
        if not np.all(np.isfinite(h.data)):
            raise FloatingPointError("non-finite node states during propagation")

    def loss(self, src_indices, dst_indices) -> ad.Tensor:
        """Mean -log p(dst) under the model's prediction distribution."""
        return attnflow.flow_loss(self.forward(src_indices).probs, dst_indices)

    def predict(self, src_indices) -> np.ndarray:
        with ad.no_grad():
            return self.forward(src_indices).probs.data

    # -- checkpoints -------------------------------------------------------

    def state_dict(self) -> dict:
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_state_dict(self, state: dict) -> None:
        for name, t in self.params.items():
            value = np.asarray(state[name])
            if value.shape != t.data.shape:
                raise ValueError(
                    f"checkpoint shape {value.shape} does not match "
                    f"parameter {name!r} shape {t.data.shape}"
                )
            t.data = value.astype(t.data.dtype)

    def save(self, path) -> None:
        np.savez(path, **self.state_dict())

    def load(self, path) -> None:
        with np.load(path) as f:
            self.load_state_dict(dict(f))

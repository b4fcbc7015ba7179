"""Heterogeneous graph transformer layer.

Node-type-specific query/key/value projections, an edge-type-specific
bilinear form inside each head's attention logit, edge-type-specific message
transforms, one softmax per target pooled over all in-neighbors across edge
types, and a per-target-type output projection with a residual connection.
Targets without in-neighbors pass through unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidInput
from .graph import relation_adjacency


@dataclass
class HgtParams:
    heads: int
    q: list[Tensor]       # per node type, (F, d)
    k: list[Tensor]       # per node type, (F, d)
    v: list[Tensor]       # per node type, (F, d)
    w_att: list[Tensor]   # per edge type, (heads, dk, dk)
    w_msg: list[Tensor]   # per edge type, (heads, dk, dk)
    o: list[Tensor]       # per node type, (d, F)

    def tensors(self):
        return [*self.q, *self.k, *self.v, *self.w_att, *self.w_msg, *self.o]

    def state_dict(self):
        return {f"p{i}": t.value.copy() for i, t in enumerate(self.tensors())}

    def load_state_dict(self, state):
        for i, t in enumerate(self.tensors()):
            t.value[...] = state[f"p{i}"]


def init_hgt_params(rng, n_node_types, n_edge_types, f_in, d, heads=4):
    if d % heads != 0:
        raise InvalidInput("head count must divide the projection width")
    dk = d // heads
    s_proj = np.sqrt(2.0 / (f_in + d))
    s_sq = np.sqrt(1.0 / dk)
    return HgtParams(
        heads=heads,
        q=[Tensor(rng.normal(0.0, s_proj, (f_in, d)), requires_grad=True) for _ in range(n_node_types)],
        k=[Tensor(rng.normal(0.0, s_proj, (f_in, d)), requires_grad=True) for _ in range(n_node_types)],
        v=[Tensor(rng.normal(0.0, s_proj, (f_in, d)), requires_grad=True) for _ in range(n_node_types)],
        w_att=[Tensor(rng.normal(0.0, s_sq, (heads, dk, dk)), requires_grad=True)
               for _ in range(n_edge_types)],
        w_msg=[Tensor(rng.normal(0.0, s_sq, (heads, dk, dk)), requires_grad=True)
               for _ in range(n_edge_types)],
        o=[Tensor(rng.normal(0.0, np.sqrt(2.0 / (d + f_in)), (d, f_in)), requires_grad=True)
           for _ in range(n_node_types)],
    )


def node_type_masks(g):
    return [(g.node_types == t).astype(np.float64)[:, None] for t in range(len(g.type_names))]


def typed_projection(h, mats, type_masks):
    out = None
    for mask, w in zip(type_masks, mats):
        term = ad.mul(ad.matmul(h, w), mask)
        out = term if out is None else ad.add(out, term)
    return out


def _to_heads(t, n, heads, dk):
    # (N, d) -> (heads, N, dk)
    return ad.transpose(ad.reshape(t, (n, heads, dk)), (1, 0, 2))


def _attention_and_messages(h, g, params, masks, type_masks):
    """Tape tensors: per-relation attention blocks (heads, N, N) summing to
    one over each target's pooled in-neighbors, and per-relation message
    stacks (heads, N, dk)."""
    n = g.num_nodes
    heads = params.heads
    d = params.q[0].shape[1]
    dk = d // heads
    qh = _to_heads(typed_projection(h, params.q, type_masks), n, heads, dk)
    kh = _to_heads(typed_projection(h, params.k, type_masks), n, heads, dk)
    vh = _to_heads(typed_projection(h, params.v, type_masks), n, heads, dk)
    kh_t = ad.transpose(kh, (0, 2, 1))

    logit_blocks = []
    for e in range(g.num_relations):
        qw = ad.matmul(qh, params.w_att[e])
        logit_blocks.append(ad.mul(ad.matmul(qw, kh_t), 1.0 / np.sqrt(dk)))
    pooled = logit_blocks[0] if len(logit_blocks) == 1 else ad.concat(logit_blocks, axis=2)
    pooled_mask = np.concatenate(masks, axis=1)[None, :, :]
    alpha = ad.masked_softmax(pooled, pooled_mask, axis=-1)
    alpha_blocks = [ad.slice_axis(alpha, 2, e * n, (e + 1) * n) for e in range(g.num_relations)]
    messages = [ad.matmul(vh, params.w_msg[e]) for e in range(g.num_relations)]
    return alpha_blocks, messages


def hgt_attention(g, h, params, masks=None):
    """Attention weights per relation as (heads, N, N) arrays, target on the
    middle axis; rows sum to one across the target's pooled in-neighbors."""
    h = ad.as_tensor(h)
    if masks is None:
        masks = [relation_adjacency(g, r) > 0 for r in range(g.num_relations)]
    type_masks = node_type_masks(g)
    alpha_blocks, _ = _attention_and_messages(h, g, params, masks, type_masks)
    return [a.value.copy() for a in alpha_blocks]


def hgt_message(g, h, params):
    """Messages per relation as (N, d) arrays, head slices concatenated; row
    s is what source s sends along that relation."""
    h = ad.as_tensor(h)
    n = g.num_nodes
    type_masks = node_type_masks(g)
    heads = params.heads
    d = params.v[0].shape[1]
    dk = d // heads
    vh = _to_heads(typed_projection(h, params.v, type_masks), n, heads, dk)
    out = []
    for e in range(g.num_relations):
        m = ad.matmul(vh, params.w_msg[e])                       # (heads, N, dk)
        merged = ad.reshape(ad.transpose(m, (1, 0, 2)), (n, d))  # concat head slices
        out.append(merged.value.copy())
    return out


def hgt_forward(h, g, params, use_lpe=False, basis=None, lpe_params=None,
                masks=None, type_masks=None):
    h = ad.as_tensor(h)
    if use_lpe:
        from .rgat import _inject_pe

        h = _inject_pe(h, basis, lpe_params)
    if len(params.q) != len(g.type_names) or len(params.w_att) != g.num_relations:
        raise InvalidInput("parameter lists must match the graph's type counts")
    if masks is None:
        masks = [relation_adjacency(g, r) > 0 for r in range(g.num_relations)]
    if type_masks is None:
        type_masks = node_type_masks(g)
    n = g.num_nodes
    heads = params.heads
    d = params.q[0].shape[1]
    dk = d // heads

    alpha_blocks, messages = _attention_and_messages(h, g, params, masks, type_masks)
    agg = None
    for alpha_e, msg_e in zip(alpha_blocks, messages):
        term = ad.matmul(alpha_e, msg_e)
        agg = term if agg is None else ad.add(agg, term)
    merged = ad.reshape(ad.transpose(agg, (1, 0, 2)), (n, d))
    out = typed_projection(merged, params.o, type_masks)
    return ad.add(h, out)

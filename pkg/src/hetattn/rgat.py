"""Relational graph attention layer.

Each relation carries its own feature transform and its own additive
attention; coefficients are softmax-normalized within the relation per
destination, the attended (transformed) neighbor features are summed across
relations, and the activation is applied last. Multiple heads split the
output width and concatenate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidInput
from .graph import relation_adjacency
from .linalg import softmax_rows

LEAKY_SLOPE = 0.2


def _inject_pe(h, basis, lpe_params):
    from .spectral import apply_pe, lpe_forward, pe_to_feature_width

    if basis is None or lpe_params is None:
        raise InvalidInput("use_lpe requires a spectral basis and encoder params")
    return apply_pe(h, pe_to_feature_width(lpe_forward(basis, lpe_params), lpe_params), "add")


@dataclass
class RgatParams:
    heads: int
    w: list[Tensor]       # per relation, (F, F')
    a_dst: list[Tensor]   # per relation, (F', 1); head slices stacked
    a_src: list[Tensor]   # per relation, (F', 1)

    def tensors(self):
        return [*self.w, *self.a_dst, *self.a_src]

    def state_dict(self):
        return {f"p{i}": t.value.copy() for i, t in enumerate(self.tensors())}

    def load_state_dict(self, state):
        for i, t in enumerate(self.tensors()):
            t.value[...] = state[f"p{i}"]


def init_rgat_params(rng, n_relations, f_in, f_out, heads=1):
    if f_out % heads != 0:
        raise InvalidInput("head count must divide the output width")
    scale_w = np.sqrt(2.0 / (f_in + f_out))
    scale_a = np.sqrt(1.0 / f_out)
    return RgatParams(
        heads=heads,
        w=[Tensor(rng.normal(0.0, scale_w, (f_in, f_out)), requires_grad=True)
           for _ in range(n_relations)],
        a_dst=[Tensor(rng.normal(0.0, scale_a, (f_out, 1)), requires_grad=True)
               for _ in range(n_relations)],
        a_src=[Tensor(rng.normal(0.0, scale_a, (f_out, 1)), requires_grad=True)
               for _ in range(n_relations)],
    )


def relation_transform(h, params, r):
    h = ad.as_tensor(h)
    w = params.w[r]
    if h.shape[1] != w.shape[0]:
        raise InvalidInput(f"feature width {h.shape[1]} != transform input {w.shape[0]}")
    return ad.matmul(h, w)


def attention_coefficients(g_r, edges, a_dst, a_src, n):
    """Per-edge attention of one relation as a dense (N, N) map, destination
    on the row. Additive logits LeakyReLU(a_dst . G_i + a_src . G_j),
    exp-normalized over each destination's in-neighbors."""
    g_r = np.asarray(g_r, dtype=np.float64)
    logits_dst = g_r @ np.asarray(a_dst, dtype=np.float64).reshape(-1)
    logits_src = g_r @ np.asarray(a_src, dtype=np.float64).reshape(-1)
    mask = np.zeros((n, n), dtype=bool)
    for s, d in edges:
        mask[d, s] = True
    raw = logits_dst[:, None] + logits_src[None, :]
    raw = np.where(raw > 0, raw, LEAKY_SLOPE * raw)
    alpha, _ = softmax_rows(raw, mask)
    return alpha


def _relation_masks(g):
    return [relation_adjacency(g, r) > 0 for r in range(g.num_relations)]


def rgat_forward(h, g, params, use_lpe=False, basis=None, lpe_params=None,
                 activation=ad.elu, masks=None):
    """One layer: per relation and head, attend over in-neighbors and sum the
    attended transformed features across relations; activation last. Nodes
    with no in-neighbor under any relation map to activation(0).

    With ``use_lpe`` the positional encodings are added onto the features
    before anything else sees them.
    """
    h = ad.as_tensor(h)
    if use_lpe:
        h = _inject_pe(h, basis, lpe_params)
    if masks is None:
        masks = _relation_masks(g)
    if len(params.w) != len(masks):
        raise InvalidInput("one weight set per relation is required")
    heads = params.heads
    f_out = params.w[0].shape[1]
    dk = f_out // heads
    per_head = [None] * heads
    for r in range(len(masks)):
        gr = relation_transform(h, params, r)
        for k in range(heads):
            gk = ad.slice_axis(gr, 1, k * dk, (k + 1) * dk)
            u = ad.matmul(gk, ad.slice_axis(params.a_dst[r], 0, k * dk, (k + 1) * dk))
            v = ad.matmul(gk, ad.slice_axis(params.a_src[r], 0, k * dk, (k + 1) * dk))
            logits = ad.leaky_relu(ad.add(u, ad.transpose(v)), LEAKY_SLOPE)
            alpha = ad.masked_softmax(logits, masks[r], axis=-1)
            mixed = ad.matmul(alpha, gk)
            per_head[k] = mixed if per_head[k] is None else ad.add(per_head[k], mixed)
    out = per_head[0] if heads == 1 else ad.concat(per_head, axis=1)
    return activation(out)

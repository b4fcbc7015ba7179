"""Graph transformer network layer: learned soft meta-path adjacencies fed
into a degree-normalized graph convolution.

Each meta-path step mixes the relation adjacencies (plus an identity
relation, so shorter paths stay reachable) through a softmax over learned
selection logits; the step matrices multiply up into a soft meta-path
adjacency, which is row-normalized and convolved. Channels run independent
soft selections and their outputs concatenate before a final projection.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidInput
from .graph import relation_adjacency


def metapath_adjacency(a_list, path):
    """Composition of relation adjacencies along a path; the first relation
    in ``path`` is applied first, so the product reads right to left."""
    for t in path:
        if not (0 <= t < len(a_list)):
            raise InvalidInput(f"unknown relation id {t}")
    if not path:
        raise InvalidInput("path must not be empty")
    out = np.asarray(a_list[path[0]], dtype=np.float64)
    for t in path[1:]:
        out = np.asarray(a_list[t], dtype=np.float64) @ out
    return out


def soft_adjacency(a_mats, weights, steps):
    """Product over steps of the softmax-weighted convex combination of the
    candidate adjacencies, then D^{-1} row normalization of the product.
    Zero rows are left untouched.

    ``weights`` is a (steps, T) tensor of selection logits over the T
    candidates; step 1 is applied first.
    """
    if steps < 1:
        raise InvalidInput("steps must be >= 1")
    weights = ad.as_tensor(weights)
    if weights.shape != (steps, len(a_mats)):
        raise InvalidInput(f"weights must have shape ({steps}, {len(a_mats)})")
    stack = np.asarray(a_mats, dtype=np.float64)
    product = None
    for i in range(steps):
        logits = ad.reshape(ad.slice_axis(weights, 0, i, i + 1), (len(a_mats),))
        w = ad.masked_softmax(logits, np.ones(len(a_mats), dtype=bool), axis=-1)
        s_i = ad.linear_combination(w, stack)
        product = s_i if product is None else ad.matmul(s_i, product)
    return ad.row_normalize(product)


def normalized_adjacency_tensor(a):
    """Differentiable D^{-1/2} (A + I) D^{-1/2}; mirrors the plain-numpy
    version in graph.py."""
    a = ad.as_tensor(a)
    n = a.shape[0]
    at = ad.add(a, np.eye(n))
    d = ad.reduce_sum(at, axis=1, keepdims=True)
    inv_sqrt = ad.rsqrt(d)
    return ad.mul(ad.mul(inv_sqrt, at), ad.transpose(inv_sqrt))


def gcn_forward(a, h, w, activation=ad.elu):
    """activation(D^{-1/2} (A + I) D^{-1/2} H W)."""
    h = ad.as_tensor(h)
    w = ad.as_tensor(w)
    if h.shape[1] != w.shape[0]:
        raise InvalidInput(f"feature width {h.shape[1]} != weight input {w.shape[0]}")
    return activation(ad.matmul(ad.matmul(normalized_adjacency_tensor(a), h), w))


@dataclass
class GtnParams:
    channels: int
    steps: int
    selection: list[Tensor]   # per channel, (steps, R + 1) logits; last = identity
    w_gcn: Tensor             # (F, F_mid), shared across channels
    w_proj: Tensor            # (channels * F_mid, F')

    def tensors(self):
        return [*self.selection, self.w_gcn, self.w_proj]

    def state_dict(self):
        return {f"p{i}": t.value.copy() for i, t in enumerate(self.tensors())}

    def load_state_dict(self, state):
        for i, t in enumerate(self.tensors()):
            t.value[...] = state[f"p{i}"]


def init_gtn_params(rng, n_relations, f_in, f_out, channels=2, steps=2):
    scale = np.sqrt(2.0 / (f_in + f_out))
    return GtnParams(
        channels=channels,
        steps=steps,
        selection=[Tensor(rng.normal(0.0, 0.1, (steps, n_relations + 1)), requires_grad=True)
                   for _ in range(channels)],
        w_gcn=Tensor(rng.normal(0.0, scale, (f_in, f_out)), requires_grad=True),
        w_proj=Tensor(rng.normal(0.0, np.sqrt(2.0 / (channels * f_out + f_out)),
                                 (channels * f_out, f_out)), requires_grad=True),
    )


def candidate_adjacencies(g):
    """Relation adjacencies plus the identity relation, the selection pool."""
    n = g.num_nodes
    return [relation_adjacency(g, r) for r in range(g.num_relations)] + [np.eye(n)]


def gtn_forward(h, g, params, use_lpe=False, basis=None, lpe_params=None,
                activation=ad.elu, candidates=None):
    h = ad.as_tensor(h)
    if use_lpe:
        from .rgat import _inject_pe

        h = _inject_pe(h, basis, lpe_params)
    if candidates is None:
        candidates = candidate_adjacencies(g)
    outs = []
    for c in range(params.channels):
        a_soft = soft_adjacency(candidates, params.selection[c], params.steps)
        outs.append(gcn_forward(a_soft, h, params.w_gcn, activation))
    merged = outs[0] if params.channels == 1 else ad.concat(outs, axis=1)
    return ad.matmul(merged, params.w_proj)

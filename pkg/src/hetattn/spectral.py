"""Laplacian spectrum and the learned positional encoding pipeline.

The graph is homogenized (all relations collapsed into one symmetric binary
adjacency) and its sym-normalized Laplacian decomposed in full. Each node j
then owns a length-m sequence of (eigenvalue, eigenvector-entry) pairs; a
small self-attention encoder over those m positions, followed by masked sum
pooling and a projection, yields the per-node encoding. Eigenpairs are
constants: gradients flow only into the encoder weights.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidInput
from .graph import homogenize
from .linalg import eigh_symmetric


def build_laplacian(g):
    """Sym-normalized Laplacian I - D^{-1/2} A D^{-1/2} of the homogenized
    graph. Rows and columns of isolated nodes are identically zero, so each
    isolated node contributes one flat (eigenvalue 0) direction."""
    a = homogenize(g)
    d = a.sum(axis=1)
    connected = d > 0
    inv_sqrt = np.zeros_like(d)
    inv_sqrt[connected] = 1.0 / np.sqrt(d[connected])
    lap = -(inv_sqrt[:, None] * a * inv_sqrt[None, :])
    lap[np.diag_indices_from(lap)] = np.where(connected, 1.0, 0.0)
    return lap


@dataclass(frozen=True)
class SpectralBasis:
    """m lowest eigenpairs; columns beyond the spectrum are zero padding."""

    m: int
    eigenvalues: np.ndarray   # (m,)
    vectors: np.ndarray       # (N, m)
    pad_mask: np.ndarray      # (m,) True where the eigenpair is real

    @property
    def num_nodes(self):
        return int(self.vectors.shape[0])

    def permuted(self, perm):
        """Basis seen by the graph with nodes relabeled as node i -> perm[i]."""
        out = np.empty_like(self.vectors)
        out[np.asarray(perm)] = self.vectors
        return SpectralBasis(self.m, self.eigenvalues.copy(), out, self.pad_mask.copy())


def compute_basis(g, m, tol=1e-10):
    if m < 1:
        raise InvalidInput("m must be >= 1")
    lap = build_laplacian(g)
    dec = eigh_symmetric(lap, tol=tol)
    n = g.num_nodes
    take = min(m, n)
    values = np.zeros(m)
    vectors = np.zeros((n, m))
    mask = np.zeros(m, dtype=bool)
    values[:take] = dec.eigenvalues[:take]
    vectors[:, :take] = dec.eigenvectors[:, :take]
    mask[:take] = True
    # Sign convention: first entry that is not numerically zero is positive.
    for i in range(take):
        col = vectors[:, i]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            vectors[:, i] = -col
    return SpectralBasis(m, values, vectors, mask)


def sign_augment(basis, rng):
    """Flip each real eigenvector by an independent fair coin; padding stays."""
    flips = np.where(rng.random(basis.m) < 0.5, -1.0, 1.0)
    flips[~basis.pad_mask] = 1.0
    return SpectralBasis(basis.m, basis.eigenvalues.copy(), basis.vectors * flips[None, :],
                         basis.pad_mask.copy())


# ---------------------------------------------------------------------------
# encoder parameters


def _glorot(rng, shape):
    fan_in, fan_out = shape[-2], shape[-1]
    return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=shape)


@dataclass
class EncoderLayerParams:
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    bo: Tensor
    w_ff1: Tensor
    b_ff1: Tensor
    w_ff2: Tensor
    b_ff2: Tensor

    def tensors(self):
        return [self.wq, self.wk, self.wv, self.wo, self.bo,
                self.w_ff1, self.b_ff1, self.w_ff2, self.b_ff2]


@dataclass
class LpeEncoderParams:
    """Weights of the eigen-sequence encoder.

    k is the encoder width, h_pe the head count (h_pe must divide k), k_ff
    the feed-forward width, d_pe the encoding width. ``w_feat`` maps the
    encoding onto feature width for additive injection and starts at zero so
    a freshly initialized model is exactly PE-free.
    """

    k: int
    h_pe: int
    d_pe: int
    w_embed: Tensor
    b_embed: Tensor
    layers: list[EncoderLayerParams] = field(default_factory=list)
    w_out: Tensor = None
    b_out: Tensor = None
    w_feat: Tensor = None
    b_feat: Tensor = None

    def tensors(self):
        out = [self.w_embed, self.b_embed]
        for layer in self.layers:
            out.extend(layer.tensors())
        out.extend([self.w_out, self.b_out, self.w_feat, self.b_feat])
        return out

    def state_dict(self):
        return {f"p{i}": t.value.copy() for i, t in enumerate(self.tensors())}

    def load_state_dict(self, state):
        for i, t in enumerate(self.tensors()):
            t.value[...] = state[f"p{i}"]


def init_lpe_params(rng, k=16, h_pe=4, n_layers=1, k_ff=32, d_pe=16, feature_width=16):
    if k % h_pe != 0:
        raise InvalidInput("head count must divide encoder width")
    layers = []
    for _ in range(n_layers):
        layers.append(EncoderLayerParams(
            wq=Tensor(_glorot(rng, (k, k)), requires_grad=True),
            wk=Tensor(_glorot(rng, (k, k)), requires_grad=True),
            wv=Tensor(_glorot(rng, (k, k)), requires_grad=True),
            wo=Tensor(_glorot(rng, (k, k)), requires_grad=True),
            bo=Tensor(np.zeros(k), requires_grad=True),
            w_ff1=Tensor(_glorot(rng, (k, k_ff)), requires_grad=True),
            b_ff1=Tensor(np.zeros(k_ff), requires_grad=True),
            w_ff2=Tensor(_glorot(rng, (k_ff, k)), requires_grad=True),
            b_ff2=Tensor(np.zeros(k), requires_grad=True),
        ))
    return LpeEncoderParams(
        k=k, h_pe=h_pe, d_pe=d_pe,
        w_embed=Tensor(_glorot(rng, (2, k)), requires_grad=True),
        b_embed=Tensor(np.zeros(k), requires_grad=True),
        layers=layers,
        w_out=Tensor(_glorot(rng, (k, d_pe)), requires_grad=True),
        b_out=Tensor(np.zeros(d_pe), requires_grad=True),
        w_feat=Tensor(np.zeros((d_pe, feature_width)), requires_grad=True),
        b_feat=Tensor(np.zeros(feature_width), requires_grad=True),
    )


# ---------------------------------------------------------------------------
# forward pass


def _attention_block(x, layer, h_pe, key_mask):
    n, m, k = x.shape
    dk = k // h_pe
    q = ad.matmul(x, layer.wq)
    kk = ad.matmul(x, layer.wk)
    v = ad.matmul(x, layer.wv)
    # (N, m, k) -> (N, h, m, dk)
    def heads(t):
        return ad.transpose(ad.reshape(t, (n, m, h_pe, dk)), (0, 2, 1, 3))
    qh, kh, vh = heads(q), heads(kk), heads(v)
    scores = ad.mul(ad.matmul(qh, ad.transpose(kh, (0, 1, 3, 2))), 1.0 / np.sqrt(dk))
    alpha = ad.masked_softmax(scores, key_mask, axis=-1)
    mixed = ad.matmul(alpha, vh)
    merged = ad.reshape(ad.transpose(mixed, (0, 2, 1, 3)), (n, m, k))
    return ad.add(ad.matmul(merged, layer.wo), layer.bo)


def lpe_forward(basis, params):
    """Per-node positional encodings, (N, d_pe), differentiable in params.

    Each node's sequence of m (eigenvalue, entry) pairs goes through the
    linear embed, the self-attention encoder with padded positions masked
    out, masked sum pooling, and the output projection. The entry channel is
    scaled by sqrt(N) before the embed: unit-norm columns spread their mass
    as 1/sqrt(N), and the fixed rescale keeps the per-node signal magnitude
    independent of graph size (it folds into the embed weights).
    """
    n, m = basis.vectors.shape
    seq = np.empty((n, m, 2))
    seq[:, :, 0] = basis.eigenvalues[None, :]
    seq[:, :, 1] = basis.vectors * np.sqrt(n)
    x = ad.add(ad.matmul(Tensor(seq), params.w_embed), params.b_embed)

    key_mask = basis.pad_mask[None, None, None, :]  # broadcast over (N, h, m, m)
    for layer in params.layers:
        x = ad.add(x, _attention_block(x, layer, params.h_pe, key_mask))
        ff = ad.matmul(ad.relu(ad.add(ad.matmul(x, layer.w_ff1), layer.b_ff1)), layer.w_ff2)
        x = ad.add(x, ad.add(ff, layer.b_ff2))

    pool_mask = basis.pad_mask.astype(np.float64)[None, :, None]
    pooled = ad.reduce_sum(ad.mul(x, pool_mask), axis=1)
    return ad.add(ad.matmul(pooled, params.w_out), params.b_out)


def pe_to_feature_width(pe, params):
    """Encoding mapped onto feature width for the additive injection mode."""
    return ad.add(ad.matmul(pe, params.w_feat), params.b_feat)


def apply_pe(h, pe, mode="add"):
    """Combine features with positional encodings, elementwise or by
    widening each row."""
    h = ad.as_tensor(h)
    pe = ad.as_tensor(pe)
    if mode == "add":
        if h.shape[1] != pe.shape[1]:
            raise InvalidInput(f"add mode needs equal widths, got {h.shape[1]} and {pe.shape[1]}")
        return ad.add(h, pe)
    if mode == "concat":
        return ad.concat([h, pe], axis=1)
    raise InvalidInput(f"unknown pe mode {mode!r}")

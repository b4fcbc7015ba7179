"""Heterogeneous graph attention (RGAT, GTN, HGT) with spectral learned
positional encodings, built on a self-contained numpy substrate."""

from .autodiff import Tensor, backward, grad_check
from .errors import (ConfigError, FormatError, InvalidInput, NoConvergence, NumericalFailure)
from .graph import (HeteroGraph, Relation, SplitAssignment, SyntheticSpec, gen_synthetic,
                    homogenize, load_graph, make_splits, normalized_adjacency_with_self_loops,
                    relation_adjacency, save_graph)
from .gtn import GtnParams, gcn_forward, gtn_forward, metapath_adjacency, soft_adjacency
from .hgt import HgtParams, hgt_attention, hgt_forward, hgt_message
from .linalg import EigenDecomposition, eigh_symmetric, softmax_rows
from .optim import Adam, AdamState, adam_step
from .rgat import RgatParams, attention_coefficients, relation_transform, rgat_forward
from .spectral import (LpeEncoderParams, SpectralBasis, apply_pe, build_laplacian,
                       compute_basis, lpe_forward, sign_augment)
from .tasks import (ModelConfig, TrainReport, TrialResult, f1_score, link_head, node_head,
                    run_trials, train)

__all__ = [name for name in dir() if not name.startswith("_")]

import numpy as np
import pytest

from hetattn import autodiff as ad
from hetattn.autodiff import Tensor, grad_check
from hetattn.errors import InvalidInput
from hetattn.graph import HeteroGraph, Relation
from hetattn.hgt import HgtParams, hgt_attention, hgt_forward, hgt_message, init_hgt_params
from hetattn.spectral import compute_basis, init_lpe_params

from oracles import hgt_oracle


def make_graph(node_types, relation_specs, f=4):
    """relation_specs: list of (src_type, dst_type, edges)."""
    node_types = np.asarray(node_types, dtype=np.int64)
    n_types = int(node_types.max()) + 1
    rels = tuple(
        Relation(f"e{i}", st, dt, np.array(e, dtype=np.int64).reshape(-1, 2))
        for i, (st, dt, e) in enumerate(relation_specs)
    )
    n = node_types.size
    return HeteroGraph(
        type_names=tuple(f"t{i}" for i in range(n_types)),
        node_types=node_types,
        relations=rels,
        features=np.arange(n * f, dtype=np.float64).reshape(n, f) / 9.0,
    ).validate()


def identity_params(n_types, n_edge_types, f, heads=1):
    dk = f // heads
    return HgtParams(
        heads=heads,
        q=[Tensor(np.eye(f), requires_grad=True) for _ in range(n_types)],
        k=[Tensor(np.eye(f), requires_grad=True) for _ in range(n_types)],
        v=[Tensor(np.eye(f), requires_grad=True) for _ in range(n_types)],
        w_att=[Tensor(np.stack([np.eye(dk)] * heads), requires_grad=True)
               for _ in range(n_edge_types)],
        w_msg=[Tensor(np.stack([np.eye(dk)] * heads), requires_grad=True)
               for _ in range(n_edge_types)],
        o=[Tensor(np.eye(f), requires_grad=True) for _ in range(n_types)],
    )


def test_attention_single_in_neighbor_is_one():
    g = make_graph([0, 0], [(0, 0, [(0, 1)])])
    p = identity_params(1, 1, 4, heads=2)
    alpha = hgt_attention(g, Tensor(g.features), p)
    assert np.allclose(alpha[0][:, 1, 0], 1.0)
    assert np.all(alpha[0][:, 0, :] == 0.0)


def test_attention_zero_projections_uniform():
    g = make_graph([0, 0, 0], [(0, 0, [(0, 2), (1, 2)])])
    p = identity_params(1, 1, 4)
    for t in p.q + p.k:
        t.value[...] = 0.0
    alpha = hgt_attention(g, Tensor(g.features), p)
    np.testing.assert_allclose(alpha[0][0, 2, :2], [0.5, 0.5])


def test_attention_matches_scalar_oracle_two_types():
    g = make_graph([0, 1, 0], [(0, 1, [(0, 1), (2, 1)]), (1, 0, [(1, 0)])], f=2)
    rng = np.random.default_rng(0)
    p = init_hgt_params(rng, 2, 2, 2, 2, heads=1)
    alpha = hgt_attention(g, Tensor(g.features), p)
    ref = hgt_oracle(
        3, list(g.node_types),
        [[(0, 1), (2, 1)], [(1, 0)]],
        g.features,
        [m.value.tolist() for m in p.q], [m.value.tolist() for m in p.k],
        [m.value.tolist() for m in p.v],
        [m.value.tolist() for m in p.w_att], [m.value.tolist() for m in p.w_msg],
        [m.value.tolist() for m in p.o], 1,
    )
    ours = hgt_forward(Tensor(g.features), g, p).value
    assert np.abs(ours - ref).max() <= 1e-10
    assert abs(alpha[0][0, 1, 0] + alpha[0][0, 1, 2] - 1.0) <= 1e-9


def test_message_identity_params_pass_features_through():
    g = make_graph([0, 0], [(0, 0, [(0, 1)])])
    p = identity_params(1, 1, 4, heads=1)
    msgs = hgt_message(g, Tensor(g.features), p)
    np.testing.assert_allclose(msgs[0], g.features, atol=1e-12)


def test_message_zero_value_projection():
    g = make_graph([0, 0], [(0, 0, [(0, 1)])])
    p = identity_params(1, 1, 4)
    for t in p.v:
        t.value[...] = 0.0
    msgs = hgt_message(g, Tensor(g.features), p)
    assert np.all(msgs[0] == 0.0)


def test_message_two_heads_match_per_head_hand_computation():
    g = make_graph([0, 0], [(0, 0, [(0, 1)])], f=4)
    rng = np.random.default_rng(4)
    p = init_hgt_params(rng, 1, 1, 4, 4, heads=2)
    msgs = hgt_message(g, Tensor(g.features), p)
    v_rows = g.features @ p.v[0].value
    for s in range(2):
        head0 = v_rows[s, :2] @ p.w_msg[0].value[0]
        head1 = v_rows[s, 2:] @ p.w_msg[0].value[1]
        np.testing.assert_allclose(msgs[0][s], np.concatenate([head0, head1]), atol=1e-12)


def test_forward_zero_lpe_matches_plain():
    g = make_graph([0, 1, 1], [(0, 1, [(0, 1), (0, 2)])], f=4)
    rng = np.random.default_rng(1)
    p = init_hgt_params(rng, 2, 1, 4, 4, heads=2)
    basis = compute_basis(g, 3)
    lpe = init_lpe_params(rng, k=4, h_pe=2, n_layers=1, k_ff=4, d_pe=4, feature_width=4)
    for t in lpe.tensors():
        t.value[...] = 0.0
    plain = hgt_forward(Tensor(g.features), g, p).value
    with_pe = hgt_forward(Tensor(g.features), g, p, use_lpe=True, basis=basis, lpe_params=lpe).value
    np.testing.assert_allclose(plain, with_pe, atol=1e-15)


def test_forward_self_loops_show_residual_structure():
    g = make_graph([0, 0], [(0, 0, [(0, 0), (1, 1)])], f=4)
    p = identity_params(1, 1, 4, heads=1)
    out = hgt_forward(Tensor(g.features), g, p).value
    # Single neighbor (itself), identity maps everywhere: out = h + (h V W_msg) O = 2h.
    np.testing.assert_allclose(out, 2.0 * g.features, atol=1e-12)


def test_forward_no_in_neighbors_pass_through():
    g = make_graph([0, 0, 0], [(0, 0, [(0, 1)])], f=4)
    rng = np.random.default_rng(2)
    p = init_hgt_params(rng, 1, 1, 4, 4, heads=2)
    out = hgt_forward(Tensor(g.features), g, p).value
    np.testing.assert_allclose(out[0], g.features[0], atol=1e-12)
    np.testing.assert_allclose(out[2], g.features[2], atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_forward_matches_scalar_oracle(seed):
    rng = np.random.default_rng(seed + 100)
    n = int(rng.integers(2, 6))
    node_types = rng.integers(0, 2, size=n)
    node_types[0] = 0
    if n > 1:
        node_types[1] = 1
    n_rel = int(rng.integers(1, 3))
    relation_specs = []
    for _ in range(n_rel):
        st, dt = int(rng.integers(0, 2)), int(rng.integers(0, 2))
        pool = [(s, d) for s in range(n) for d in range(n)
                if node_types[s] == st and node_types[d] == dt]
        if not pool:
            st = dt = 0
            pool = [(s, d) for s in range(n) for d in range(n)
                    if node_types[s] == 0 and node_types[d] == 0]
        take = rng.permutation(len(pool))[: rng.integers(1, len(pool) + 1)]
        relation_specs.append((st, dt, [pool[i] for i in take]))
    g = make_graph(node_types, relation_specs, f=4)
    heads = int(rng.choice([1, 2]))
    p = init_hgt_params(rng, 2, n_rel, 4, 4, heads=heads)
    h = rng.normal(size=(n, 4))
    ours = hgt_forward(Tensor(h), g, p).value
    ref = hgt_oracle(
        n, list(node_types), [spec[2] for spec in relation_specs], h,
        [m.value.tolist() for m in p.q], [m.value.tolist() for m in p.k],
        [m.value.tolist() for m in p.v],
        [m.value.tolist() for m in p.w_att], [m.value.tolist() for m in p.w_msg],
        [m.value.tolist() for m in p.o], heads,
    )
    assert np.abs(ours - ref).max() <= 1e-10


def test_per_target_head_attention_sums():
    rng = np.random.default_rng(6)
    g = make_graph([0, 1, 0, 1], [(0, 1, [(0, 1), (2, 1), (0, 3)]), (1, 0, [(1, 0), (3, 2)])], f=4)
    p = init_hgt_params(rng, 2, 2, 4, 4, heads=2)
    alpha = hgt_attention(g, Tensor(g.features), p)
    total = sum(a.sum(axis=2) for a in alpha)  # (heads, N)
    in_deg = np.zeros(4)
    for r in g.relations:
        for s, d in r.edges:
            in_deg[d] += 1
    for t in range(4):
        expected = 1.0 if in_deg[t] else 0.0
        assert np.all(np.abs(total[:, t] - expected) <= 1e-9)


def test_permutation_equivariance():
    rng = np.random.default_rng(7)
    node_types = np.array([0, 1, 0, 1, 0])
    relation_specs = [(0, 1, [(0, 1), (2, 3), (4, 1)]), (1, 0, [(1, 2), (3, 0)])]
    g = make_graph(node_types, relation_specs, f=4)
    p = init_hgt_params(rng, 2, 2, 4, 4, heads=2)
    h = rng.normal(size=(5, 4))
    base = hgt_forward(Tensor(h), g, p).value

    perm = np.array([2, 0, 4, 1, 3])  # node i -> perm[i]
    inv = np.argsort(perm)
    relabeled = [(st, dt, [(perm[s], perm[d]) for s, d in e]) for st, dt, e in relation_specs]
    g2 = HeteroGraph(
        type_names=g.type_names,
        node_types=node_types[inv],
        relations=tuple(
            Relation(f"e{i}", st, dt, np.array(e, dtype=np.int64))
            for i, (st, dt, e) in enumerate(relabeled)
        ),
        features=np.zeros((5, 4)),
    ).validate()
    h2 = np.empty_like(h)
    h2[perm] = h
    out2 = hgt_forward(Tensor(h2), g2, p).value
    np.testing.assert_allclose(out2[perm], base, atol=1e-12)


def test_type_isolation():
    # Changing the key projection of a type with zero nodes cannot matter.
    g = make_graph([0, 0], [(0, 0, [(0, 1)])], f=4)
    g = HeteroGraph(g.type_names + ("ghost",), g.node_types, g.relations, g.features)
    rng = np.random.default_rng(8)
    p = init_hgt_params(rng, 2, 1, 4, 4, heads=2)
    base = hgt_forward(Tensor(g.features), g, p).value
    p.k[1].value[...] = 99.0
    bumped = hgt_forward(Tensor(g.features), g, p).value
    np.testing.assert_array_equal(base, bumped)


def test_parameter_count_validation():
    g = make_graph([0, 0], [(0, 0, [(0, 1)])], f=4)
    p = identity_params(2, 1, 4)  # claims two node types; graph has one
    with pytest.raises(InvalidInput):
        hgt_forward(Tensor(g.features), g, p)


def test_hgt_gradients():
    rng = np.random.default_rng(9)
    g = make_graph([0, 1, 0, 1], [(0, 1, [(0, 1), (2, 3)]), (1, 0, [(1, 2)])], f=4)
    p = init_hgt_params(rng, 2, 2, 4, 4, heads=2)
    h = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
    probe = rng.normal(size=(4, 4))

    def f():
        return ad.reduce_sum(ad.mul(hgt_forward(h, g, p), probe))

    assert grad_check(f, [h, *p.tensors()], h=1e-5) <= 1e-4

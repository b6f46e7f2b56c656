import warnings

import numpy as np
import pytest

from neumatc.errors import DimensionError, DomainError, FormatError, UnsupportedVersionError
from neumatc.mlp import Activation, Mlp, init_mlp
from neumatc.model import (Component, NetConfig, NeuMatCModel, Op, OperationKind, ParamDomain, fit_latents,
                           forward_components, init_model, load_model, model_from_bytes, model_to_bytes, predict,
                           predict_batch, save_model)

SMALL = NetConfig(hidden_layers=2, width=12, first_scale=5.0)


def test_component_shapes():
    assert OperationKind.parse("svd", 3).component_shapes(5, 4) == [("U", (5, 3)), ("S", (3, 1)), ("V", (4, 3))]
    assert OperationKind.parse("qr").component_shapes(5, 4) == [("Q", (5, 4)), ("R", (4, 4))]
    assert OperationKind.parse("linsolve").component_shapes(6, 6) == [("x", (6, 1))]
    with pytest.raises(DimensionError):
        OperationKind.parse("inverse").component_shapes(3, 4)
    with pytest.raises(DimensionError):
        OperationKind.parse("svd", 5).component_shapes(4, 4)


def test_param_domain():
    dom = ParamDomain((0.0, -1.0), (1.0, 1.0))
    assert dom.dim == 2
    assert dom.contains([0.5, 0.0]) and not dom.contains([1.5, 0.0])
    with pytest.raises(DomainError):
        ParamDomain((1.0,), (0.0,))


def test_zero_latent_gives_zero_matrices():
    m = init_model("inverse", (3, 3), 4, SMALL, seed=0)
    for c in m.components:
        c.latent[...] = 0.0
    for g in predict_batch(m, [0.0, 0.5, 1.0]):
        np.testing.assert_array_equal(g[0], np.zeros((3, 3)))


def test_constant_net_returns_first_slice(rng):
    latent = rng.standard_normal((3, 3, 2))
    net = Mlp([np.zeros((2, 1))], [np.array([1.0, 0.0])])
    m = NeuMatCModel(OperationKind.parse("expm"), (3, 3), [Component("expm", latent, net)])
    for p in (0.1, 0.9):
        np.testing.assert_array_equal(predict(m, p)[0], latent[:, :, 0])


def test_exactly_representable_family_recovered(rng):
    m = init_model("expm", (4, 4), 2, NetConfig(hidden_layers=1, width=2, first_scale=None), seed=1)
    net = m.components[0].net
    net.weights[0][...] = [[np.pi], [2 * np.pi]]
    net.biases[0][...] = [0.0, 0.3]
    net.weights[1][...] = np.eye(2)
    net.biases[1][...] = 0.0
    s1, s2 = rng.standard_normal((2, 4, 4))

    def family(p):
        phi = np.sin(net.omega * (np.array([np.pi, 2 * np.pi]) * p + [0.0, 0.3]))
        return [phi[0] * s1 + phi[1] * s2]

    train = np.linspace(0, 1, 6)
    fit_latents(m, train, [family(p) for p in train])
    for p in rng.uniform(size=10):
        np.testing.assert_allclose(predict(m, p)[0], family(p)[0], atol=1e-10)


def test_batch_bit_identical_to_single():
    m = init_model("svd", (6, 5), 4, SMALL, seed=2)
    ps = np.linspace(0, 1, 100)
    batch = predict_batch(m, ps)
    assert len(predict_batch(m, ps[:1])) == 1
    for p, b in zip(ps, batch):
        for x, y in zip(predict(m, p), b):
            np.testing.assert_array_equal(x, y)


def test_svd_output_sorted_and_nonnegative():
    m = init_model("svd", (5, 5), 3, SMALL, seed=3)
    for u, s, v in predict_batch(m, np.linspace(0, 1, 20)):
        assert np.all(s >= 0)
        assert np.all(np.diff(s[:, 0]) <= 0)


def test_structure_masks_and_cholesky_diagonal():
    qr = init_model("qr", (5, 4), 3, SMALL, seed=4)
    ch = init_model("cholesky", (4, 4), 3, SMALL, seed=4)
    for q, r in predict_batch(qr, np.linspace(0, 1, 5)):
        np.testing.assert_array_equal(np.tril(r, -1), 0.0)
    for (low,) in predict_batch(ch, np.linspace(0, 1, 5)):
        np.testing.assert_array_equal(np.triu(low, 1), 0.0)
        assert np.all(np.diag(low) > 0)


def test_training_forward_matches_predict_up_to_rounding():
    m = init_model("inverse", (4, 4), 3, SMALL, seed=5)
    ps = np.linspace(0, 1, 7)
    outs, _ = forward_components(m, ps)
    for g, pred in zip(outs[0], predict_batch(m, ps)):
        np.testing.assert_allclose(g, pred[0], rtol=1e-12, atol=1e-12)


def test_out_of_domain_warns():
    m = init_model("inverse", (2, 2), 2, SMALL, seed=0)
    with pytest.warns(RuntimeWarning):
        g = predict(m, 1.5)
    assert g.out_of_domain
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert not predict(m, 0.5).out_of_domain


def test_non_finite_parameter_rejected():
    m = init_model("inverse", (2, 2), 2, SMALL, seed=0)
    with pytest.raises(DomainError):
        predict(m, np.nan)


def test_init_rejects_zero_d():
    with pytest.raises(DimensionError):
        init_model("inverse", (3, 3), 0)


def test_init_deterministic():
    a = init_model("qr", (4, 3), 3, SMALL, seed=9)
    b = init_model("qr", (4, 3), 3, SMALL, seed=9)
    for x, y in zip(a.params(), b.params()):
        np.testing.assert_array_equal(x, y)


def test_warm_start_recovers_feature_spanned_targets(rng):
    m = init_model("inverse", (3, 3), 5, SMALL, seed=6)
    c_star = rng.standard_normal((3, 3, 5))
    ps = np.linspace(0, 1, 12).reshape(-1, 1)
    from neumatc.mlp import mlp_forward_batch
    phi = mlp_forward_batch(m.components[0].net, ps)
    targets = [[np.einsum("ijl,l->ij", c_star, f)] for f in phi]
    fit_latents(m, ps, targets)
    np.testing.assert_allclose(m.components[0].latent, c_star, atol=1e-8)


def test_multi_parameter_model():
    m = init_model("inverse", (3, 3), 4, SMALL, domain=ParamDomain.unit(2), seed=0)
    assert m.param_dim == 2
    assert len(predict_batch(m, np.random.default_rng(0).uniform(size=(4, 2)))) == 4


def test_serialization_round_trip(tmp_path):
    m = init_model("svd", (5, 4), [3, 2, 4], NetConfig(hidden_layers=2, width=8, activation=Activation.GELU),
                   domain=ParamDomain((-1.0,), (2.0,)), seed=8)
    buf = model_to_bytes(m)
    back = model_from_bytes(buf)
    assert back.kind == m.kind and back.domain == m.domain
    for x, y in zip(m.params(), back.params()):
        np.testing.assert_array_equal(x, y)
    save_model(m, tmp_path / "m.nmc")
    assert model_to_bytes(load_model(tmp_path / "m.nmc")) == buf


def test_truncated_model_rejected():
    buf = model_to_bytes(init_model("qr", (3, 3), 2, SMALL, seed=0))
    for cut in (3, 10, len(buf) // 2, len(buf) - 1):
        with pytest.raises(FormatError):
            model_from_bytes(buf[:cut])


def test_version_mismatch_rejected():
    buf = bytearray(model_to_bytes(init_model("inverse", (2, 2), 2, SMALL, seed=0)))
    buf[4] = 9
    with pytest.raises(UnsupportedVersionError):
        model_from_bytes(bytes(buf))


def test_trailing_bytes_rejected():
    buf = model_to_bytes(init_model("inverse", (2, 2), 2, SMALL, seed=0))
    with pytest.raises(FormatError):
        model_from_bytes(buf + b"\0")

import numpy as np
import pytest
import scipy.sparse as sp

from neumatc import baselines, datagen
from neumatc.errors import ArgumentError, FormatError, SolverFailure
from neumatc.model import Op, OperationKind
from neumatc.residuals import structure_residual

from cases import stencil_matrix


def numerical_rank(stack, tol):
    s = np.linalg.svd(stack.reshape(len(stack), -1), compute_uv=False)
    return int(np.sum(s > tol * s[0]))


# -- sinusoidal -----------------------------------------------------------------


def test_sinusoidal_shift_and_split():
    ds = datagen.gen_sinusoidal(datagen.SinusoidalGenConfig(n=12, r=3, eps=0.7, seed=2))
    assert len(ds.train()) == 40 and len(ds.test()) == 100
    shift = ds.inputs - ds.extras["low_rank"]
    off = ~np.eye(12, dtype=bool)
    assert np.all(shift[:, off] == 0.0)
    # the diagonal is exact up to the rounding of one addition
    np.testing.assert_allclose(shift[:, ~off], 0.7, rtol=0, atol=4 * np.finfo(float).eps * 4)
    np.testing.assert_array_equal(ds.source(ds.params[5]), ds.inputs[5])


def test_sinusoidal_default_eps_relative():
    ds = datagen.gen_sinusoidal(datagen.SinusoidalGenConfig(n=10, r=2, seed=0))
    peak = max(np.linalg.norm(m, 2) for m in ds.extras["low_rank"])
    assert ds.metadata["eps"] == pytest.approx(0.5 * peak, rel=1e-15)


def test_sinusoidal_rejects_zero_rank():
    with pytest.raises(ArgumentError):
        datagen.SinusoidalGenConfig(r=0)


def test_sinusoidal_deterministic():
    a = datagen.gen_sinusoidal(datagen.SinusoidalGenConfig(n=8, r=2, seed=5))
    b = datagen.gen_sinusoidal(datagen.SinusoidalGenConfig(n=8, r=2, seed=5))
    np.testing.assert_array_equal(a.inputs, b.inputs)


def test_sinusoidal_stacked_numerical_rank():
    ds = datagen.gen_sinusoidal(datagen.SinusoidalGenConfig(n=64, r=8, seed=0, n_train=40, n_test=0))
    assert numerical_rank(ds.inputs, 1e-8) <= 2 * 8 + 1


# -- controlled rank ------------------------------------------------------------------


def test_controlled_rank_single_pattern():
    ds = datagen.gen_controlled_rank(datagen.ControlledRankGenConfig(n=6, d=1, n_train=5, n_test=5))
    assert numerical_rank(ds.inputs, 1e-12) == 1


@pytest.mark.parametrize("d,count", [(3, 20), (5, 20), (8, 6)])
def test_controlled_rank_factor_stack_rank(d, count):
    ds = datagen.gen_controlled_rank(datagen.ControlledRankGenConfig(n=10, d=d, n_train=count, n_test=0))
    assert numerical_rank(ds.extras["U"], 1e-10) == min(d, count)
    assert numerical_rank(ds.extras["V"], 1e-10) == min(d, count)


def test_controlled_rank_construction_exact():
    ds = datagen.gen_controlled_rank(datagen.ControlledRankGenConfig(n=12, r=7, d=4, n_train=5, n_test=5))
    for h, u, s, v in zip(ds.inputs, ds.extras["U"], ds.extras["S"], ds.extras["V"]):
        assert np.linalg.norm(h - (u * s) @ v.T) < 1e-12
        assert np.all(s > 0)


# -- 2-D Fourier -------------------------------------------------------------------------


def test_fourier_symmetric_positive_definite():
    ds = datagen.gen_2d_fourier(datagen.Fourier2dGenConfig(n=8, grid=10, n_test=30))
    assert ds.params.shape[1] == 2
    for a in ds.inputs:
        np.testing.assert_array_equal(a, a.T)
    for a in ds.inputs[:20]:
        baselines.cholesky(a)
    assert len(ds.train()) == 5


def test_fourier_constant_basis():
    ds = datagen.gen_2d_fourier(datagen.Fourier2dGenConfig(n=5, n_basis=1, grid=6, n_test=10))
    for a in ds.inputs[1:]:
        np.testing.assert_array_equal(a, ds.inputs[0])


def test_fourier_basis_values():
    p = np.array([[0.25, 0.5]])
    # constant, then cos(2 pi y), cos(2 pi x)
    np.testing.assert_allclose(datagen.fourier_basis_2d(p, 3), [[1.0, -1.0, 0.0]], atol=1e-15)


# -- advection-diffusion-reaction --------------------------------------------------------


def test_adr_matches_stencil_oracle():
    asm, _ = datagen.assemble_adr(3, n_points=4, n_train=2)
    np.testing.assert_array_equal(asm.matrix(0.0).toarray(), stencil_matrix(3, 50.0, 0.0))


def test_adr_decomposition_identity():
    asm, ds = datagen.assemble_adr(5, n_points=10, n_train=4)
    for p in (0.1, 0.37, 0.8):
        direct = stencil_matrix(5, 50.0 * np.cos(2 * np.pi * p), 50.0 * np.sin(2 * np.pi * p))
        np.testing.assert_allclose(asm.matrix(p).toarray(), direct, rtol=0, atol=1e-12)
    assert ds.kind.op is Op.LINSOLVE and len(ds.test()) == 10


def test_adr_blocks():
    asm, _ = datagen.assemble_adr(4, n_points=2, n_train=2)
    assert np.all(asm.a1.diagonal() == 0) and np.all(asm.a2.diagonal() == 0)
    assert (asm.a0 - asm.a0.T).nnz == 0
    np.testing.assert_array_equal(asm.matrix(0.375).toarray(), asm.matrix(1.375).toarray())
    with pytest.raises(ArgumentError):
        datagen.assemble_adr(2)


# -- alignment -------------------------------------------------------------------------


def _frames(rng, count=5, n=4):
    base = rng.standard_normal((n, n))
    return [baselines.dense_svd(base + 0.01 * k * rng.standard_normal((n, n))) for k in range(count)]


def test_alignment_fixed_point(rng):
    aligned = datagen.align_svd_sequence(_frames(rng))
    again = datagen.align_svd_sequence(aligned)
    for (u1, s1, v1), (u2, s2, v2) in zip(aligned, again):
        np.testing.assert_array_equal(u1, u2)
        np.testing.assert_array_equal(v1, v2)


def test_alignment_undoes_sign_flip(rng):
    aligned = datagen.align_svd_sequence(_frames(rng))
    u, s, v = aligned[3]
    flipped = list(aligned)
    flipped[3] = (u * [1, -1, 1, 1], s, v * [1, -1, 1, 1])
    for (u1, _, v1), (u2, _, v2) in zip(aligned, datagen.align_svd_sequence(flipped)):
        np.testing.assert_array_equal(u1, u2)
        np.testing.assert_array_equal(v1, v2)


def test_alignment_preserves_reconstruction(rng):
    frames = _frames(rng)
    for (u, s, v), (ua, sa, va) in zip(frames, datagen.align_svd_sequence(frames, permute=True)):
        np.testing.assert_allclose((ua * sa) @ va.T, (u * s) @ v.T, atol=1e-12)


def test_alignment_permutation_handles_crossing(rng):
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    frames = [baselines.dense_svd((q * [1.0 + p, 2.0 - p, 0.1]) @ q.T) for p in np.linspace(0, 1, 10)]

    def jump(seq):
        return max(np.max(np.linalg.norm(b[0] - a[0], axis=0)) for a, b in zip(seq, seq[1:]))

    before = jump(datagen.align_svd_sequence(frames))
    after = jump(datagen.align_svd_sequence(frames, permute=True))
    assert after < before
    assert after < 1e-10


# -- targets --------------------------------------------------------------------------------


def test_inverse_targets():
    ds = datagen.compute_targets(datagen.gen_sinusoidal(datagen.SinusoidalGenConfig(n=8, r=2, n_train=5, n_test=5)))
    for a, (g,) in zip(ds.inputs, ds.targets):
        np.testing.assert_allclose(a @ g, np.eye(8), atol=1e-10)
    assert datagen.max_target_residual(ds) < 1e-8


def test_linsolve_targets():
    _, ds = datagen.assemble_adr(6, n_points=4, n_train=3)
    ds = datagen.compute_targets(ds)
    for a, (x,) in zip(ds.inputs, ds.targets):
        assert np.linalg.norm(a @ x[:, 0] - ds.rhs) / np.linalg.norm(ds.rhs) < 1e-10


@pytest.mark.parametrize("rank", [None, 3])
def test_svd_targets_orthonormal(rank):
    cfg = datagen.SinusoidalGenConfig(n=8, r=3, n_train=6, n_test=4, kind="svd", rank=rank)
    ds = datagen.compute_targets(datagen.gen_sinusoidal(cfg))
    for a, t in zip(ds.inputs, ds.targets):
        res = structure_residual(ds.kind, a, t)
        assert np.linalg.norm(res.blocks["orthoU"]) < 1e-10
        assert np.linalg.norm(res.blocks["orthoV"]) < 1e-10
    assert datagen.max_target_residual(ds) < 1e-8


def test_target_failure_lists_points():
    inputs = np.stack([np.eye(2), np.zeros((2, 2)), np.eye(2)])
    ds = datagen.ParametricDataset("inverse", [0.0, 0.5, 1.0], inputs)
    with pytest.raises(SolverFailure) as info:
        datagen.compute_targets(ds)
    assert [p for p, _ in info.value.failures] == [[0.5]]


def test_cholesky_and_qr_targets():
    ds = datagen.compute_targets(datagen.gen_2d_fourier(datagen.Fourier2dGenConfig(n=5, grid=5, n_test=5,
                                                                                   kind="cholesky")))
    assert datagen.max_target_residual(ds) < 1e-12


# -- dataset utilities -------------------------------------------------------------------------


def test_subset_and_lookup(rng):
    ds = datagen.gen_controlled_rank(datagen.ControlledRankGenConfig(n=4, d=2, n_train=3, n_test=2))
    test = ds.test()
    np.testing.assert_array_equal(test.params, ds.params[3:])
    assert test.extras["U"].shape[0] == 2
    stored = datagen.ParametricDataset("inverse", ds.params, ds.inputs)
    np.testing.assert_array_equal(stored.matrices_at(ds.params[[4, 0]]), ds.inputs[[4, 0]])
    with pytest.raises(ArgumentError):
        stored.matrices_at([[0.123]])
    cand = stored.sample_candidates(rng, 3)
    assert all(any(np.array_equal(c, p) for p in ds.params) for c in cand)


def test_normalize_scale():
    ds = datagen.gen_sinusoidal(datagen.SinusoidalGenConfig(n=8, r=2, n_train=4, n_test=3, kind="svd"))
    scaled = datagen.normalize_scale(ds)
    assert max(np.linalg.norm(a, 2) for a in scaled.inputs) == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_allclose(scaled.source(0.3), scaled.metadata["scale"] * ds.source(0.3), rtol=1e-15)
    _, adr = datagen.assemble_adr(3, 2, 2)
    with pytest.raises(ArgumentError):
        datagen.normalize_scale(adr)


# -- files ---------------------------------------------------------------------------------


def test_sequence_round_trip(tmp_path):
    ds = datagen.gen_2d_fourier(datagen.Fourier2dGenConfig(n=4, grid=4, n_test=5))
    datagen.save_sequence(ds, tmp_path / "s.nms")
    back = datagen.load_sequence(tmp_path / "s.nms")
    np.testing.assert_array_equal(back.params, ds.params)
    np.testing.assert_array_equal(back.inputs, ds.inputs)
    assert back.kind.op is Op.INVERSE


def test_sequence_truncated_record():
    ds = datagen.gen_sinusoidal(datagen.SinusoidalGenConfig(n=3, r=1, n_train=3, n_test=0))
    buf = datagen.sequence_to_bytes(ds)
    with pytest.raises(FormatError) as info:
        datagen.sequence_from_bytes(buf[:-5])
    assert info.value.record == 2


def test_sequence_shape_mismatch():
    a = datagen.ParametricDataset("expm", [0.0], np.ones((1, 2, 2)))
    b = datagen.ParametricDataset("expm", [1.0], np.ones((1, 3, 3)))
    buf = datagen.sequence_to_bytes(a)
    other = datagen.sequence_to_bytes(b)
    header = bytearray(buf[:21])
    header[5:13] = (2).to_bytes(8, "little")
    with pytest.raises(FormatError) as info:
        datagen.sequence_from_bytes(bytes(header) + buf[21:] + other[21:])
    assert info.value.record == 1


def test_sequence_bad_magic():
    with pytest.raises(FormatError):
        datagen.sequence_from_bytes(b"NOPE" + bytes(30))


def test_targets_file_round_trip():
    ds = datagen.compute_targets(datagen.gen_sinusoidal(
        datagen.SinusoidalGenConfig(n=5, r=2, n_train=3, n_test=2, kind="svd", rank=2)))
    back = datagen.targets_from_bytes(datagen.targets_to_bytes(ds.targets))
    for t, b in zip(ds.targets, back):
        for x, y in zip(t, b):
            np.testing.assert_array_equal(x, y)

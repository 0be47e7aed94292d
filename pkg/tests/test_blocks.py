import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cwpnet import tensor as T
from cwpnet.blocks import CnnBlock, Wad, Wae, extract_degradation_rep, wad_forward, wae_forward
from cwpnet.nn import ConfigError
from cwpnet.tensor import DimensionError, Tensor

from gradcheck import relative_errors


def rng(seed=0):
    return np.random.default_rng(seed)


def projected_loss(out, proj):
    return T.sum(T.mul(out, Tensor(proj, dtype=out.dtype)))


def block_mean_oracle(g, grid):
    n, _, h, w = g.shape
    out = np.zeros((n, grid * grid))
    for b in range(n):
        for i in range(grid):
            r0, r1 = (i * h) // grid, -((-(i + 1) * h) // grid)
            for j in range(grid):
                c0, c1 = (j * w) // grid, -((-(j + 1) * w) // grid)
                total, count = 0.0, 0
                for y in range(r0, r1):
                    for x in range(c0, c1):
                        total += g[b, 0, y, x]
                        count += 1
                out[b, i * grid + j] = total / count
    return out


def test_wae_shape_contract():
    out, gate = wae_forward(Tensor(rng(1).normal(size=(1, 8, 16, 16))), Wae(8, 16, rng()))
    assert out.dims == (1, 16, 8, 8)
    assert gate.dims == (1, 1, 8, 8)
    assert np.all((gate.data > 0) & (gate.data < 1))


def test_wae_zero_input_zero_output():
    p = Wae(8, 16, rng())
    out, _ = wae_forward(Tensor(np.zeros((1, 8, 8, 8))), p)
    assert np.all(out.data == 0)


def test_wae_odd_dims_rejected():
    with pytest.raises(DimensionError):
        wae_forward(Tensor(np.zeros((1, 8, 7, 8))), Wae(8, 16, rng()))


def test_wad_shape_contract_and_zero():
    p = Wad(16, rng())
    out = wad_forward(Tensor(rng(2).normal(size=(1, 16, 8, 8))), p)
    assert out.dims == (1, 8, 16, 16)
    assert np.all(wad_forward(Tensor(np.zeros((1, 16, 8, 8))), p).data == 0)


def test_wad_odd_channels_rejected():
    with pytest.raises(ConfigError):
        Wad(7, rng())


def test_encoder_decoder_symmetry():
    x = Tensor(rng(3).normal(size=(2, 8, 12, 16)))
    down, _ = wae_forward(x, Wae(8, 16, rng()))
    up = wad_forward(down, Wad(16, rng(), cout=8))
    assert up.dims == x.dims


def test_cnn_block_shape_and_zero_residual():
    block = CnnBlock(4, rng())
    x = rng(4).normal(size=(1, 4, 5, 5)).astype(np.float32)
    assert block(Tensor(x)).dims == x.shape
    block.conv2.zero_()
    np.testing.assert_array_equal(block(Tensor(x)).data, x)


def test_rep_constant_gate():
    rep = extract_degradation_rep(np.full((1, 1, 16, 16), 0.5))
    assert rep.shape == (1, 64)
    assert np.all(rep == 0.5)


def test_rep_half_image_locality():
    eps = 1e-3
    g = np.full((1, 1, 16, 16), eps)
    g[..., :8] = 1 - eps
    rep = extract_degradation_rep(g).reshape(8, 8)
    assert np.all(rep[:, :4] > 0.99) and np.all(rep[:, 4:] < 0.01)


@pytest.mark.parametrize("h,w", [(16, 16), (8, 8), (12, 20), (9, 11)])
def test_rep_matches_block_mean_oracle(h, w):
    g = rng(5).uniform(size=(2, 1, h, w))
    np.testing.assert_allclose(extract_degradation_rep(g), block_mean_oracle(g, 8), atol=1e-6)


def test_rep_rejects_small_gate():
    with pytest.raises(DimensionError, match="32x32"):
        extract_degradation_rep(np.zeros((1, 1, 4, 8)))


@settings(max_examples=20, deadline=None)
@given(st.integers(8, 24), st.integers(8, 24), st.integers(0, 2**31))
def test_rep_entries_in_unit_interval(h, w, seed):
    g = 1 / (1 + np.exp(-np.random.default_rng(seed).normal(size=(1, 1, h, w)) * 4))
    rep = extract_degradation_rep(g)
    assert rep.shape == (1, 64)
    assert np.all((rep > 0) & (rep < 1))


def _randomise(module, r, s=0.5):
    for p in module.parameters():
        p.data[...] = r.normal(size=p.dims) * s
    return module


def test_wae_gradient():
    r = rng(6)
    p = _randomise(Wae(4, 8, r), r)
    x = r.normal(size=(1, 4, 4, 4))
    proj_out, proj_gate = r.normal(size=(1, 8, 2, 2)), r.normal(size=(1, 1, 2, 2))

    def fn(t, m):
        out, gate = wae_forward(t["x"], m)
        return T.add(projected_loss(out, proj_out), projected_loss(gate, proj_gate))

    errs = relative_errors(fn, {"x": x}, p)
    assert max(errs.values()) < 1e-3, errs


def test_wad_gradient():
    r = rng(7)
    p = _randomise(Wad(8, r), r)
    x = r.normal(size=(1, 8, 2, 2))
    proj = r.normal(size=(1, 4, 4, 4))
    errs = relative_errors(lambda t, m: projected_loss(wad_forward(t["x"], m), proj), {"x": x}, p,
                           max_entries=60)
    assert max(errs.values()) < 1e-3, errs


def test_cnn_block_gradient():
    r = rng(8)
    p = _randomise(CnnBlock(3, r), r)
    x = r.normal(size=(1, 3, 4, 4))
    proj = r.normal(size=x.shape)
    errs = relative_errors(lambda t, m: projected_loss(m(t["x"]), proj), {"x": x}, p)
    assert max(errs.values()) < 1e-3, errs


def test_encoder_decoder_composite_gradient():
    r = rng(9)
    enc, dec = _randomise(Wae(4, 8, r), r), _randomise(Wad(8, r, cout=4), r)
    x = r.normal(size=(1, 4, 4, 4))
    proj = r.normal(size=x.shape)

    def fn(t, _):
        return projected_loss(wad_forward(wae_forward(t["x"], enc)[0], dec), proj)

    errs = relative_errors(fn, {"x": x})
    assert max(errs.values()) < 1e-3, errs

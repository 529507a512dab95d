import pytest
import torch

from eventsb.wavelet import WaveletSubbands, dwt2, idwt2
from helpers import finite_difference_check


def test_constant_block_collapses_to_ll():
    x = torch.full((1, 4, 4), 2.5)
    bands = dwt2(x)
    assert torch.allclose(bands.ll, torch.full((1, 2, 2), 5.0))
    for band in (bands.lh, bands.hl, bands.hh):
        assert band.abs().max() == 0


def test_checkerboard_block_is_pure_hh():
    x = torch.tensor([[1.0, -1.0], [-1.0, 1.0]]).reshape(1, 2, 2)
    bands = dwt2(x)
    assert bands.hh.item() == 2.0
    assert bands.ll.item() == 0.0
    assert bands.lh.item() == 0.0
    assert bands.hl.item() == 0.0


def test_constant_ll_inverts_to_constant():
    ll = torch.full((1, 3, 3), 2.0)
    zero = torch.zeros_like(ll)
    x = idwt2(WaveletSubbands(ll, zero, zero, zero))
    assert torch.allclose(x, torch.full((1, 6, 6), 1.0))


def test_zero_subbands_invert_to_zero():
    zero = torch.zeros(2, 4, 4)
    assert idwt2(WaveletSubbands(zero, zero, zero, zero)).abs().max() == 0


@pytest.mark.parametrize("seed", range(10))
def test_round_trip_and_parseval(seed):
    gen = torch.Generator().manual_seed(seed)
    c = int(torch.randint(1, 5, (1,), generator=gen))
    h = 2 * int(torch.randint(2, 33, (1,), generator=gen))
    w = 2 * int(torch.randint(2, 33, (1,), generator=gen))
    x = torch.randn(c, h, w, generator=gen)
    bands = dwt2(x)
    back = idwt2(bands)
    assert (back - x).abs().max() <= 1e-5
    energy_in = float((x.double() ** 2).sum())
    energy_bands = float(sum((b.double() ** 2).sum() for b in bands))
    assert abs(energy_in - energy_bands) <= 1e-6 * energy_in


def test_linearity():
    gen = torch.Generator().manual_seed(0)
    x = torch.randn(2, 8, 8, generator=gen, dtype=torch.float64)
    y = torch.randn(2, 8, 8, generator=gen, dtype=torch.float64)
    a, b = 0.7, -1.3
    mixed = dwt2(a * x + b * y)
    for combined, bx, by in zip(mixed, dwt2(x), dwt2(y)):
        assert torch.allclose(combined, a * bx + b * by, atol=1e-12)


def test_odd_dims_rejected():
    with pytest.raises(ValueError):
        dwt2(torch.zeros(1, 5, 4))
    with pytest.raises(ValueError):
        dwt2(torch.zeros(1, 4, 7))


def test_mismatched_subband_shapes_rejected():
    ll = torch.zeros(1, 2, 2)
    with pytest.raises(ValueError):
        idwt2(WaveletSubbands(ll, ll, ll, torch.zeros(1, 3, 2)))


def test_gradients_match_finite_differences():
    gen = torch.Generator().manual_seed(1)
    weights = [torch.randn(2, 4, 4, generator=gen, dtype=torch.float64) for _ in range(4)]

    def forward_energy(x):
        bands = dwt2(x)
        return sum((w * b).sum() for w, b in zip(weights, bands))

    x = torch.randn(2, 8, 8, generator=gen, dtype=torch.float64)
    finite_difference_check(forward_energy, x)

    back_weight = torch.randn(2, 8, 8, generator=gen, dtype=torch.float64)

    def inverse_energy(x):
        bands = dwt2(x)
        return (idwt2(WaveletSubbands(bands.ll, bands.lh, bands.hl, bands.hh * 1.5)) * back_weight).sum()

    finite_difference_check(inverse_energy, x)

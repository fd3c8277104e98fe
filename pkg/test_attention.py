"""Channel/spatial attention, the SE block and the cross fusion block."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from crosscbam.errors import ConfigurationError, UsageError
from crosscbam.nn import reference as ref
from crosscbam.nn.attention import (
    Ccbam,
    ChannelAttention,
    SEBlock,
    SpatialAttention,
    ccbam_param_count,
)
from crosscbam.nn.tensor import Precision, Tensor
from crosscbam.services.profiler import count_params
from crosscbam.services.verification import oracle_suite, run_checks


def _t(array):
    return Tensor(np.asarray(array, dtype=np.float64), dtype=Precision.DOUBLE)


def _bottleneck(module):
    return {"w1": module.fc1.params.weight.data, "b1": module.fc1.params.bias.data,
            "w2": module.fc2.params.weight.data, "b2": module.fc2.params.bias.data}


def _copy_params(target, source):
    for (_, mine), (_, other) in zip(target.named_parameters(), source.named_parameters()):
        mine.data[...] = other.data


def test_channel_attention_matches_scalar_loops():
    rng = np.random.default_rng(0)
    module = ChannelAttention(32, rng=rng, dtype=Precision.DOUBLE)
    x = rng.standard_normal((2, 32, 3, 5))
    gates = module(_t(x)).data
    assert gates.shape == (2, 32, 1, 1)
    assert ((gates > 0) & (gates < 1)).all()
    assert_allclose(gates, ref.channel_attention_ref(x, _bottleneck(module)), rtol=1e-10)


def test_unshared_channel_attention_has_a_second_mlp():
    rng = np.random.default_rng(1)
    module = ChannelAttention(32, rng=rng, shared_mlp=False, dtype=Precision.DOUBLE)
    x = rng.standard_normal((1, 32, 2, 2))
    p = _bottleneck(module)
    p.update({"mw1": module.max_fc1.params.weight.data, "mb1": module.max_fc1.params.bias.data,
              "mw2": module.max_fc2.params.weight.data, "mb2": module.max_fc2.params.bias.data})
    assert_allclose(module(_t(x)).data, ref.channel_attention_ref(x, p), rtol=1e-10)
    assert count_params(module) == 2 * count_params(ChannelAttention(32, rng=rng))


def test_spatial_attention_pools_max_then_mean():
    rng = np.random.default_rng(2)
    module = SpatialAttention(rng=rng, dtype=Precision.DOUBLE)
    x = rng.standard_normal((1, 8, 3, 4))
    expected = ref.spatial_attention_ref(x, module.fuse.params.weight.data, module.fuse.params.bias.data)
    assert module(_t(x)).shape == (1, 1, 3, 4)
    assert_allclose(module(_t(x)).data, expected, rtol=1e-10)


def test_se_block_matches_scalar_loops():
    rng = np.random.default_rng(3)
    block = SEBlock(32, rng=rng, dtype=Precision.DOUBLE)
    x = rng.standard_normal((2, 32, 2, 3))
    expected = ref.se_block_ref(x, {"w1": block.squeeze.params.weight.data, "b1": block.squeeze.params.bias.data,
                                    "w2": block.excite.params.weight.data, "b2": block.excite.params.bias.data})
    assert_allclose(block(_t(x)).data, expected, rtol=1e-10)


def test_reduction_must_divide_channels():
    with pytest.raises(ConfigurationError):
        ChannelAttention(24, rng=np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        SEBlock(8, rng=np.random.default_rng(0))


def test_ccbam_matches_scalar_loops():
    rng = np.random.default_rng(4)
    block = Ccbam(16, rng=rng, dtype=Precision.DOUBLE)
    high, low = rng.standard_normal((1, 16, 3, 2)), rng.standard_normal((1, 16, 3, 2))

    def sa(m):
        return {"weight": m.fuse.params.weight.data, "bias": m.fuse.params.bias.data}

    expected = ref.ccbam_ref(high, low, {
        "ca_high": _bottleneck(block.ca_high), "ca_low": _bottleneck(block.ca_low),
        "sa_high": sa(block.sa_high), "sa_low": sa(block.sa_low),
    })
    assert_allclose(block(_t(high), _t(low)).data, expected, rtol=1e-10)


def test_ccbam_zero_weights_average_the_inputs():
    rng = np.random.default_rng(5)
    block = Ccbam(16, rng=rng, dtype=Precision.DOUBLE)
    for param in block.parameters():
        param.data[...] = 0.0
    high, low = rng.standard_normal((2, 16, 2, 2)), rng.standard_normal((2, 16, 2, 2))
    assert_allclose(block(_t(high), _t(low)).data, 0.25 * (high + low), rtol=1e-12)


def test_ccbam_self_fusion_with_tied_stacks():
    rng = np.random.default_rng(6)
    block = Ccbam(16, rng=rng, dtype=Precision.DOUBLE)
    _copy_params(block.ca_low, block.ca_high)
    _copy_params(block.sa_low, block.sa_high)
    x = _t(rng.standard_normal((1, 16, 3, 3)))
    gated = x.data * block.ca_high(x).data
    s = block.sa_high(_t(gated)).data
    assert_allclose(block(x, x).data, 2.0 * gated * s, rtol=1e-12)


def test_ccbam_swapping_inputs_and_stacks_together_is_a_no_op():
    rng = np.random.default_rng(7)
    block = Ccbam(16, rng=rng, dtype=Precision.DOUBLE)
    swapped = Ccbam(16, rng=rng, dtype=Precision.DOUBLE)
    _copy_params(swapped.ca_high, block.ca_low)
    _copy_params(swapped.ca_low, block.ca_high)
    _copy_params(swapped.sa_high, block.sa_low)
    _copy_params(swapped.sa_low, block.sa_high)
    high, low = _t(rng.standard_normal((1, 16, 4, 3))), _t(rng.standard_normal((1, 16, 4, 3)))
    assert_allclose(block(high, low).data, swapped(low, high).data, rtol=1e-12)


def test_ccbam_rejects_mismatched_inputs():
    block = Ccbam(16, rng=np.random.default_rng(0), dtype=Precision.DOUBLE)
    with pytest.raises(UsageError, match="h: 4 vs 2"):
        block(_t(np.zeros((1, 16, 4, 4))), _t(np.zeros((1, 16, 2, 4))))


def test_ccbam_parameter_count():
    for shared in (True, False):
        block = Ccbam(256, rng=np.random.default_rng(0), shared_mlp=shared)
        assert count_params(block) == ccbam_param_count(256, shared_mlp=shared)
    assert ccbam_param_count(256) == 2 * (256 * 16 + 16 + 16 * 256 + 256 + 3)


def test_oracle_suite_passes():
    report = run_checks(oracle_suite())
    assert report.passed, [c.details for c in report.failures]


def main():
    print("Attention tests")
    print("=" * 50)
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            print(f"  {name}")
            fn()
    print("\nAll attention tests passed")


if __name__ == "__main__":
    main()

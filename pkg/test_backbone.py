"""STDC module widths, backbone shapes and parameter counts."""
import numpy as np
import pytest

from crosscbam.errors import ConfigurationError, UsageError
from crosscbam.nn.backbone import (
    BackboneSpec,
    StdcBackbone,
    StdcModule,
    StdcModuleSpec,
    stdc_block_channels,
)
from crosscbam.nn.layers import convx_param_count
from crosscbam.nn.params import Mode
from crosscbam.nn.tensor import Tensor, no_grad
from crosscbam.services.profiler import count_params


def test_block_channel_rule():
    assert stdc_block_channels(256, 4) == [128, 64, 32, 32]
    assert stdc_block_channels(64, 2) == [32, 32]
    assert sum(stdc_block_channels(1024, 4)) == 1024
    with pytest.raises(ConfigurationError):
        stdc_block_channels(100, 4)
    with pytest.raises(ConfigurationError):
        stdc_block_channels(64, 1)


def test_stride_two_module_halves_resolution():
    module = StdcModule(StdcModuleSpec(16, 64, stride=2), rng=np.random.default_rng(0), dtype="float32")
    module.set_mode(Mode.INFER)
    with no_grad():
        out = module(Tensor(np.random.default_rng(1).random((1, 16, 8, 8)).astype(np.float32)))
    assert out.shape == (1, 64, 4, 4)


def test_module_rejects_wrong_input_width():
    module = StdcModule(StdcModuleSpec(16, 64), rng=np.random.default_rng(0), dtype="float32")
    with pytest.raises(ConfigurationError):
        module(Tensor(np.zeros((1, 8, 4, 4), dtype=np.float32)))


def test_backbone_stage_shapes():
    backbone = StdcBackbone(BackboneSpec.for_variant("stdc1", base_ch=16), rng=np.random.default_rng(0))
    backbone.set_mode(Mode.INFER)
    with no_grad():
        features = backbone(Tensor(np.random.default_rng(0).random((2, 3, 64, 96)).astype(np.float32)))
    assert features["stage3"].shape == (2, 64, 8, 12)
    assert features["stage4"].shape == (2, 128, 4, 6)
    assert features["stage5"].shape == (2, 256, 2, 3)


def test_backbone_input_contract():
    backbone = StdcBackbone(BackboneSpec.for_variant("stdc1", base_ch=16), rng=np.random.default_rng(0))
    with pytest.raises(UsageError):
        backbone(Tensor(np.zeros((1, 3, 48, 64), dtype=np.float32)))
    with pytest.raises(UsageError):
        backbone(Tensor(np.zeros((1, 1, 64, 64), dtype=np.float32)))


def test_stdc1_parameter_count_is_closed_form():
    backbone = StdcBackbone(BackboneSpec.for_variant("stdc1"), rng=np.random.default_rng(0))
    stem = convx_param_count(3, 32, 3) + convx_param_count(32, 64, 3)

    def module(in_ch, out_ch):
        w = stdc_block_channels(out_ch)
        return (convx_param_count(in_ch, w[0], 1) + convx_param_count(w[0], w[1], 3)
                + convx_param_count(w[1], w[2], 3) + convx_param_count(w[2], w[3], 3))

    expected = stem
    for in_ch, out_ch in ((64, 256), (256, 512), (512, 1024)):
        expected += module(in_ch, out_ch) + module(out_ch, out_ch)
    assert count_params(backbone) == expected == 5_308_448


def test_stdc2_is_deeper_than_stdc1():
    m = StdcBackbone(BackboneSpec.for_variant("stdc1", base_ch=16), rng=np.random.default_rng(0))
    l = StdcBackbone(BackboneSpec.for_variant("stdc2", base_ch=16), rng=np.random.default_rng(0))
    assert [len(getattr(l, f"stage{i}")) for i in (3, 4, 5)] == [4, 5, 3]
    assert count_params(l) > count_params(m)


def test_unknown_variant():
    with pytest.raises(ConfigurationError):
        BackboneSpec.for_variant("stdc3")


def main():
    print("Backbone tests")
    print("=" * 50)
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            print(f"  {name}")
            fn()
    print("\nAll backbone tests passed")


if __name__ == "__main__":
    main()

"""Declarative description of a Cross-CBAM network."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Tuple

from crosscbam.errors import ConfigurationError
from crosscbam.nn.se_aspp import SeAsppConfig


class Variant(Enum):
    """Network size; M sits on the STDC1 encoder, L on STDC2."""
    M = "m"
    L = "l"

    @property
    def backbone(self) -> str:
        return "stdc1" if self is Variant.M else "stdc2"

    @classmethod
    def parse(cls, value: "Variant | str") -> "Variant":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"stdc1": "m", "stdc2": "l", "cross-cbam-m": "m", "cross-cbam-l": "l"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ConfigurationError(f"unknown variant '{value}', expected M or L") from None


@dataclass(frozen=True)
class NetworkConfig:
    variant: Variant = Variant.M
    decoder_ch: int = 256
    dilations: Tuple[int, ...] = field(default=(1, 3))
    num_classes: int = 19
    aux_head: bool = True
    base_ch: int = 64
    proj_kernel: int = 3
    use_se_aspp: bool = True
    use_ccbam: bool = True
    se_input: str = "input"
    ca_shared_mlp: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if self.decoder_ch < 16 or self.decoder_ch % 16:
            raise ConfigurationError(f"decoder width must be a positive multiple of 16, got {self.decoder_ch}")
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be at least 2, got {self.num_classes}")
        if self.proj_kernel not in (1, 3):
            raise ConfigurationError(f"proj_kernel must be 1 or 3, got {self.proj_kernel}")
        # validates dilations and se_input
        self.se_aspp

    @property
    def encoder_channels(self) -> Tuple[int, int, int]:
        return 4 * self.base_ch, 8 * self.base_ch, 16 * self.base_ch

    @property
    def se_aspp(self) -> SeAsppConfig:
        return SeAsppConfig(
            in_ch=self.encoder_channels[2],
            branch_ch=self.decoder_ch,
            dilations=self.dilations,
            se_input=self.se_input,
        )

    def replace(self, **changes: Any) -> "NetworkConfig":
        data = {**self.to_dict(), **changes}
        return NetworkConfig.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "variant": self.variant.value,
            "decoder_ch": self.decoder_ch,
            "dilations": list(self.dilations),
            "num_classes": self.num_classes,
            "aux_head": self.aux_head,
            "base_ch": self.base_ch,
            "proj_kernel": self.proj_kernel,
            "use_se_aspp": self.use_se_aspp,
            "use_ccbam": self.use_ccbam,
            "se_input": self.se_input,
            "ca_shared_mlp": self.ca_shared_mlp,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NetworkConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown network config keys: {', '.join(unknown)}")
        return cls(**data)


__all__ = ["NetworkConfig", "Variant"]

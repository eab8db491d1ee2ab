"""User-steerable conditioning signal: thrust-to-weight limit or viewing-direction offset."""

from dataclasses import dataclass

import numpy as np

TWR_RANGE = (1.6, 4.5)
VIEW_RANGE = (-np.pi / 4.0, np.pi / 4.0)
DEFAULT_BINS = 14


class OutOfRange(ValueError):
    """Conditioning value outside the declared range."""


@dataclass(frozen=True)
class ConditioningSpec:
    """Mode, value range, and encoding of the conditioning input."""

    mode: str = "twr"  # "twr" | "view"
    encoding: str = "continuous"  # "continuous" | "onehot"
    bins: int = DEFAULT_BINS
    lo: float = TWR_RANGE[0]
    hi: float = TWR_RANGE[1]

    def __post_init__(self):
        if self.mode not in ("twr", "view"):
            raise ValueError(f"unknown conditioning mode {self.mode!r}")
        if self.encoding not in ("continuous", "onehot"):
            raise ValueError(f"unknown conditioning encoding {self.encoding!r}")
        if self.encoding == "onehot" and self.bins < 2:
            raise ValueError("onehot encoding needs bins >= 2")
        if not self.hi > self.lo:
            raise ValueError("conditioning range must have hi > lo")

    @classmethod
    def view(cls, encoding: str = "continuous", bins: int = DEFAULT_BINS) -> "ConditioningSpec":
        return cls(mode="view", encoding=encoding, bins=bins, lo=VIEW_RANGE[0], hi=VIEW_RANGE[1])

    @property
    def dim(self) -> int:
        return self.bins if self.encoding == "onehot" else 1

    def clamp(self, value: float) -> float:
        return float(min(max(value, self.lo), self.hi))

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    def bin_index(self, value: float) -> int:
        """Quantizer shared by one-hot encoding and multihead selection."""
        if not self.contains(value):
            raise OutOfRange(f"{value} outside [{self.lo}, {self.hi}]")
        idx = int(np.floor(self.bins * (value - self.lo) / (self.hi - self.lo)))
        return min(idx, self.bins - 1)

    def sample(self, rng: np.random.Generator) -> float:
        """Fresh per-episode value: uniform over the range, or a uniform bin center."""
        if self.encoding == "onehot":
            k = int(rng.integers(self.bins))
            width = (self.hi - self.lo) / self.bins
            return float(self.lo + (k + 0.5) * width)
        return float(rng.uniform(self.lo, self.hi))


@dataclass(frozen=True)
class ConditioningSignal:
    spec: ConditioningSpec
    value: float


def encode_conditioning(signal: ConditioningSignal) -> np.ndarray:
    """Continuous: affine map of the range onto [-1, 1]. One-hot: unit bin vector."""
    spec = signal.spec
    if not spec.contains(signal.value):
        raise OutOfRange(f"{signal.value} outside [{spec.lo}, {spec.hi}]")
    if spec.encoding == "onehot":
        out = np.zeros(spec.bins)
        out[spec.bin_index(signal.value)] = 1.0
        return out
    scaled = 2.0 * (signal.value - spec.lo) / (spec.hi - spec.lo) - 1.0
    return np.array([scaled])

"""Named learnable arrays shared by the forward pass, gradients and optimizer."""

from __future__ import annotations

import zlib
from typing import Iterator, Mapping

import numpy as np

from .autodiff import Tensor, tensor


class ParameterBank:
    """Ordered mapping from parameter name to a float64 array.

    Names are dotted paths such as ``visual.0.W_r.actor`` or ``semantic.w_vs``.
    """

    def __init__(self, arrays: Mapping[str, np.ndarray] | None = None):
        self._arrays: dict[str, np.ndarray] = {}
        for name, arr in (arrays or {}).items():
            self[name] = arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __setitem__(self, name: str, value) -> None:
        self._arrays[name] = np.array(value, dtype=np.float64)

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def __iter__(self) -> Iterator[str]:
        return iter(self._arrays)

    def __len__(self) -> int:
        return len(self._arrays)

    def items(self):
        return self._arrays.items()

    def names(self) -> list[str]:
        return list(self._arrays)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: v.shape for k, v in self._arrays.items()}

    def copy(self) -> "ParameterBank":
        return ParameterBank({k: v.copy() for k, v in self._arrays.items()})

    def leaves(self) -> dict[str, Tensor]:
        """Fresh differentiable leaves for one forward pass."""
        return {k: tensor(v, name=k) for k, v in self._arrays.items()}

    def num_values(self) -> int:
        return int(sum(v.size for v in self._arrays.values()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParameterBank):
            return NotImplemented
        if list(self._arrays) != list(other._arrays):
            return False
        return all(a.shape == other[k].shape and a.tobytes() == other[k].tobytes()
                   for k, a in self._arrays.items())

    __hash__ = None  # type: ignore[assignment]


def param_rng(seed: int, name: str) -> np.random.Generator:
    # One stream per name: adding or removing a parameter group never shifts
    # the initial values of the others.
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


def fan_in_uniform(seed: int, name: str, shape: tuple[int, ...]) -> np.ndarray:
    fan_in = shape[-1] if len(shape) > 1 else shape[0]
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return param_rng(seed, name).uniform(-bound, bound, size=shape)

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class ParamStore:
    """Named trainable tensors with seeded initialization.

    Weights draw from uniform(-scale, scale); biases start at zero. Creation
    order fixes the random stream, so the same sequence of ``weight`` and
    ``bias`` calls under one seed reproduces the same values.
    """

    def __init__(self, seed: int = 0, dtype=np.float64, scale: float = 0.1):
        self.rng = np.random.default_rng(seed)
        self.dtype = np.dtype(dtype)
        self.scale = scale
        self.params: dict[str, Tensor] = {}

    def _register(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(data.astype(self.dtype), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def weight(self, name: str, *shape: int) -> Tensor:
        return self._register(name, self.rng.uniform(-self.scale, self.scale, size=shape))

    def bias(self, name: str, *shape: int) -> Tensor:
        return self._register(name, np.zeros(shape))

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def items(self):
        return self.params.items()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, arrays: dict[str, np.ndarray]) -> None:
        missing = sorted(set(self.params) - set(arrays))
        if missing:
            raise KeyError(f"checkpoint lacks parameters: {missing}")
        for k, t in self.params.items():
            if arrays[k].shape != t.shape:
                raise ValueError(f"shape mismatch for {k!r}: {arrays[k].shape} vs {t.shape}")
            t.data = np.array(arrays[k], dtype=t.dtype)

    def num_parameters(self) -> int:
        return int(sum(t.data.size for t in self.params.values()))

"""Named-parameter container shared by both embedding networks."""
from __future__ import annotations

import numpy as np

from .numerics import Tensor, parameter


def uniform_init(rng, shape, fan_in, gain=1.0, dtype=np.float64):
    """Uniform init with variance gain**2 / fan_in."""
    bound = gain * np.sqrt(3.0 / max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class ModelParams:
    """Ordered mapping of parameter name -> Tensor plus the config that shaped them."""

    kind = "base"

    def __init__(self, config, tensors):
        self.config = dict(config)
        self.params = {name: parameter(np.asarray(v), name) for name, v in tensors.items()}

    def __getitem__(self, name) -> Tensor:
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def names(self):
        return list(self.params)

    def arrays(self):
        return {k: v.data for k, v in self.params.items()}

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def astype(self, dtype):
        return type(self).from_arrays(self.config, {k: v.astype(dtype) for k, v in self.arrays().items()})

    def copy(self):
        return type(self).from_arrays(self.config, {k: v.copy() for k, v in self.arrays().items()})

    @classmethod
    def from_arrays(cls, config, arrays):
        obj = cls.__new__(cls)
        ModelParams.__init__(obj, config, arrays)
        return obj

    def num_parameters(self):
        return int(sum(v.data.size for v in self.params.values()))

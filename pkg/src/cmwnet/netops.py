"""Bridge between ParameterStore arrays and autodiff graph nodes."""

from . import autodiff as ad
from .autodiff import Tensor


class TensorParams:
    """Wraps a ParameterStore's arrays as (optionally trainable) Tensors.

    Tensor.data aliases the store's arrays, so in-place optimizer updates
    are visible to anyone holding the store.
    """

    def __init__(self, store, requires_grad=False):
        self.store = store
        self._tensors = {k: Tensor(a, requires_grad=requires_grad)
                         for k, a in store.items()}

    def tensor(self, key):
        return self._tensors[key]

    def layer(self, key):
        return self.store.layer(key)

    def tensors(self):
        return self._tensors.items()

    def zero_grad(self):
        for t in self._tensors.values():
            t.grad = None

    def apply(self, key, x):
        """Run layer `key` (conv or transposed conv per layout) on x."""
        spec = self.store.layer(key)
        w = self._tensors[f"{key}.weight"]
        b = self._tensors[f"{key}.bias"]
        if spec.kind == "conv":
            return ad.conv2d(x, w, b, stride=spec.stride, pad=spec.pad,
                             dilation=spec.dilation)
        return ad.conv_transpose2d(x, w, b, stride=spec.stride)


def as_tensor_params(params, requires_grad=False):
    if isinstance(params, TensorParams):
        return params
    return TensorParams(params, requires_grad=requires_grad)

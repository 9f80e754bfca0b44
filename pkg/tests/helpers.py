import numpy as np

from hierzoom.tensor import Tensor, backward


def numeric_grad(f, arr, h=1e-5, indices=None):
    """Central differences of scalar ``f()`` with respect to entries of ``arr`` (mutated in place)."""
    flat = arr.reshape(-1)
    indices = range(flat.size) if indices is None else indices
    out = {}
    for i in indices:
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        out[i] = (up - down) / (2 * h)
    return out


def rel_err(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def check_op_grad(build, *shapes, seed=0, tol=1e-4, scale=1.0, offset=0.0):
    """Compare autograd and finite-difference gradients of ``sum(w * build(*inputs))``."""
    rng = np.random.default_rng(seed)
    arrays = [rng.normal(size=s) * scale + offset for s in shapes]
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = build(*tensors)
    w = rng.normal(size=out.shape)
    backward((out * Tensor(w)).sum())

    def value():
        return float(np.sum(build(*[Tensor(a) for a in arrays]).data * w))

    for a, t in zip(arrays, tensors):
        num = numeric_grad(value, a)
        got = t.grad.reshape(-1)
        for i, v in num.items():
            if abs(v) < 1e-8 and abs(got[i]) < 1e-8:
                continue
            assert rel_err(got[i], v) <= tol, (i, got[i], v)

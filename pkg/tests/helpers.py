import numpy as np

from mem2mem import autodiff as ad


def numeric_grad(f, arrays, eps=1e-5):
    """Central differences of scalar ``f()`` with respect to each array,
    perturbing entries in place."""
    out = []
    for arr in arrays:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = arr[i]
            arr[i] = old + eps
            fp = f()
            arr[i] = old - eps
            fm = f()
            arr[i] = old
            g[i] = (fp - fm) / (2 * eps)
        out.append(g)
    return out


def rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def check_grads(build, leaves, eps=1e-5):
    """``build(*tensors) -> scalar Tensor``. Returns the worst relative error
    between analytic and central-difference gradients over ``leaves``
    (float64 arrays)."""
    tensors = [ad.Tensor(a, requires_grad=True) for a in leaves]
    loss = build(*tensors)
    ad.backward(loss)
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    def f():
        with ad.no_grad():
            return float(build(*[ad.Tensor(t.data) for t in tensors]).data)

    numeric = numeric_grad(f, [t.data for t in tensors], eps)
    return max(rel_err(a, n) for a, n in zip(analytic, numeric))

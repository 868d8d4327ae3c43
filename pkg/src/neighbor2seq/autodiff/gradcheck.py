from __future__ import annotations

import numpy as np

STEP = 1e-5


class GradientCheckError(AssertionError):
    pass


def relative_error(analytic, numeric) -> np.ndarray:
    a, n = np.asarray(analytic), np.asarray(numeric)
    return np.abs(a - n) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))


def numeric_grad(f, x: np.ndarray, step: float = STEP) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to ``x`` (mutated in place)."""
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f()
        flat[i] = orig - step
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * step)
    return grad


def grad_check(fwd, bwd, inputs, rng=None, tolerance=None, step=STEP) -> float:
    """Compare ``bwd`` against central differences of ``fwd``.

    ``fwd(*inputs)`` must return ``(out, cache)`` and ``bwd(dout, cache)`` one
    gradient per input.  The output is reduced to a scalar with a fixed
    random projection.  Returns the largest per-coordinate relative error;
    raises :class:`GradientCheckError` if it exceeds ``tolerance``.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    out, cache = fwd(*inputs)
    if isinstance(out, tuple):
        out = out[0]
    proj = rng.standard_normal(np.shape(out))
    analytic = bwd(proj, cache)

    def scalar():
        o = fwd(*inputs)[0]
        if isinstance(o, tuple):
            o = o[0]
        return float(np.sum(proj * o))

    worst = 0.0
    for x, a in zip(inputs, analytic):
        num = numeric_grad(scalar, x, step)
        worst = max(worst, float(relative_error(a, num).max(initial=0.0)))
    if tolerance is not None and worst > tolerance:
        raise GradientCheckError(f"max relative error {worst:.3g} exceeds {tolerance:.3g}")
    return worst


def model_grad_check(model, batch, targets, step=STEP) -> float:
    """Largest relative error between backprop and central differences of the
    training loss, over every parameter entry and the input batch.

    Runs the model in inference mode so the loss is a deterministic function.
    """
    batch = np.array(batch, dtype=np.float64)

    def loss():
        return model.loss(model.forward(batch, training=False), targets)[0]

    model.zero_grad()
    _, dlogits = model.loss(model.forward(batch, training=False), targets)
    dbatch = model.backward(dlogits)
    worst = float(relative_error(dbatch, numeric_grad(loss, batch, step)).max())
    for p in model.parameters():
        num = numeric_grad(loss, p.value, step)
        worst = max(worst, float(relative_error(p.grad, num).max()))
    return worst

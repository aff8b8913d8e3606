"""Central-difference gradient verification."""

from __future__ import annotations

import numpy as np

from .network import Network


def _rel_err(a: np.ndarray, b: np.ndarray, noise: float = 0.0) -> float:
    """Norm-wise relative error after discounting ``noise`` of the difference norm."""
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0:
        return 0.0
    return float(max(0.0, np.linalg.norm(a - b) - noise) / scale)


def grad_check(
    network: Network,
    x: np.ndarray,
    eps: float = 1e-5,
    train: bool = True,
    seed: int = 0,
    max_per_tensor: int | None = None,
    return_details: bool = False,
):
    """Compare analytic and numeric gradients of a random linear probe of the output.

    The loss is ``sum(R * network(x))`` for a fixed Gaussian ``R``.  Every
    trainable (non-frozen) parameter tensor and the input are checked; ``max_per_tensor`` limits the
    check to a seeded random subset of entries per tensor.  The error of a
    tensor is ``|g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|)`` in
    the Euclidean norm over the checked entries; the maximum over tensors is
    returned.  Central differences carry roughly ``eps_mach * |loss| / eps``
    of roundoff per entry; ten times that (in norm) is discounted from the
    difference so tensors whose true gradient is exactly zero, such as conv
    biases feeding a train-mode batch norm, do not report pure roundoff as
    100% error.  Runs in 64-bit on a copy of the network.
    """
    net = network.astype(np.float64)
    x = np.asarray(x, dtype=np.float64).copy()
    rng = np.random.default_rng(seed)
    probe = rng.standard_normal(net.output_shape(x.shape))

    def loss() -> float:
        return float(np.sum(probe * net.forward(x, train)))

    net.zero_grad()
    net.forward(x, train)
    grad_x = net.backward(probe)
    analytic = {key: g.copy() for key, g in net.grad_dict().items()}

    targets = [(key, layer.params, name) for key, layer, name in net.parameters() if not layer.frozen]
    details = {}
    for key, store, name in targets + [("input", None, None)]:
        arr = x if store is None else store[name]
        g_an = grad_x if store is None else analytic[key]
        flat = arr.reshape(-1)
        idx = np.arange(flat.size)
        if max_per_tensor is not None and flat.size > max_per_tensor:
            idx = np.sort(rng.choice(flat.size, max_per_tensor, replace=False))
        numeric = np.empty(idx.size)
        loss_scale = 1.0
        for n, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss()
            flat[i] = orig - eps
            down = loss()
            flat[i] = orig
            numeric[n] = (up - down) / (2 * eps)
            loss_scale = max(loss_scale, abs(up), abs(down))
        noise = 10 * np.sqrt(idx.size) * np.finfo(np.float64).eps * loss_scale / eps
        details[key] = _rel_err(g_an.reshape(-1)[idx], numeric, noise)
    worst = max(details.values()) if details else 0.0
    return (worst, details) if return_details else worst

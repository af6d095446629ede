"""Pure-numpy implementations of the hot per-opportunity kernels."""
import numpy as np


def resolve_collisions(choices, preambles, num_preambles):
    choices = np.asarray(choices, dtype=np.int64)
    preambles = np.asarray(preambles, dtype=np.int64)
    attempt = choices != 0
    P = max(int(num_preambles), int(preambles.max(initial=0)))
    key = (choices - 1) * P + (preambles - 1)
    key = np.where(attempt, key, -1)
    if not attempt.any():
        return np.zeros(choices.shape, dtype=bool)
    counts = np.bincount(key[attempt])
    collided = np.zeros(choices.shape, dtype=bool)
    collided[attempt] = counts[key[attempt]] > 1
    return collided


def stacked_logits(x, weights, biases):
    """Forward one observation per agent through per-agent MLPs.

    ``x`` is (J, d); ``weights[l]`` is (J, d_l, d_{l+1}); ``biases[l]`` is
    (J, d_{l+1}). Hidden layers use ReLU, the output layer is linear.
    """
    h = np.asarray(x, dtype=np.float64)
    last = len(weights) - 1
    for l, (W, b) in enumerate(zip(weights, biases)):
        h = np.matmul(h[:, None, :], W)[:, 0, :] + b
        if l < last:
            np.maximum(h, 0.0, out=h)
    return h


def sample_categorical(probs, u):
    """Inverse-CDF draw per row: the first index whose cumulative mass exceeds u."""
    cdf = np.cumsum(probs, axis=1)
    idx = (cdf <= np.asarray(u)[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1).astype(np.int64)

import numpy as np

from nvlearn.models import MlpModel, mlp_sample_loss


def random_mlp(rng, sizes=(3, 4, 4, 1), scale=1.0, demand_scale=1.0):
    weights = [rng.normal(0, scale, size=(o, i)) for i, o in zip(sizes[:-1], sizes[1:])]
    biases = [rng.normal(0, scale, size=o) for o in sizes[1:]]
    return MlpModel(tuple(weights), tuple(biases), demand_scale)


def fd_layer_grads(model, x, d, c, kind, h=1e-5):
    """Central differences of the per-sample loss for every weight and bias."""
    theta = model.params()
    g = np.zeros_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        up = mlp_sample_loss(model.with_params(theta + e), x, d, c, kind)
        dn = mlp_sample_loss(model.with_params(theta - e), x, d, c, kind)
        g[k] = (up - dn) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / denom)

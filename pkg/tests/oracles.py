"""Independent reference computations the package is checked against."""

import numpy as np

from greenguard.autoenc import Activation, ArchitectureSpec, AutoencoderModel, LayerSpec, _forward_all

FD_STEP = 1e-5
REL_FLOOR = 1e-6


def random_small_network(rng, max_dim=6, max_width=8, kink_margin=1e-3):
    """A random autoencoder plus input batch whose ReLU units all sit away from the kink."""
    acts = list(Activation)
    while True:
        d = int(rng.integers(2, max_dim + 1))
        enc = [LayerSpec(int(rng.integers(1, max_width + 1)), acts[rng.integers(3)])
               for _ in range(int(rng.integers(0, 2)))]
        enc.append(LayerSpec(int(rng.integers(1, d)), acts[rng.integers(3)]))
        dec = [LayerSpec(int(rng.integers(1, max_width + 1)), acts[rng.integers(3)])
               for _ in range(int(rng.integers(0, 2)))]
        dec.append(LayerSpec(d, acts[rng.integers(3)]))
        spec = ArchitectureSpec(d, enc, dec)
        model = AutoencoderModel.initialize(spec, seed=int(rng.integers(2**31)))
        for b in model.biases:
            b += rng.normal(scale=0.1, size=b.shape)
        X = rng.uniform(0.0, 1.0, size=(int(rng.integers(1, 6)), d))
        pre, _ = _forward_all(model, X)
        if all(np.min(np.abs(z)) > kink_margin
               for z, layer in zip(pre, spec.layers) if layer.activation is Activation.RELU):
            return model, X


def objective(model, X):
    """Per-row summed squared reconstruction error, averaged over rows."""
    _, acts = _forward_all(model, X)
    return float(np.sum((acts[-1] - X) ** 2) / X.shape[0])


def finite_difference_gradients(model, X, h=FD_STEP):
    grads = []
    for p in model.weights + model.biases:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = objective(model, X)
            flat[i] = orig - h
            down = objective(model, X)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=REL_FLOOR):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def brute_force_sweep(benign, attack, grid):
    """Balanced accuracy at every grid point by direct counting, no vectorization."""
    rows = []
    for theta in grid:
        tp = sum(1 for e in attack if e > theta)
        tn = sum(1 for e in benign if not e > theta)
        tpr, tnr = tp / len(attack), tn / len(benign)
        rows.append((theta, tpr, tnr, (tpr + tnr) / 2))
    best = max(r[3] for r in rows)
    chosen = min(r[0] for r in rows if r[3] == best)
    return chosen, rows

"""Central finite-difference gradients of the query-MAE loss.

All coordinates of one layer are perturbed at once: the perturbation of
weight ``W[a, o]`` only shifts column ``o`` of that layer's pre-activation
by ``h * act[:, a]``, so the rest of the network runs as a batch over
coordinates. Within a fixed ReLU pattern and fixed residual signs the loss
is linear in any single parameter, so central differences are exact up to
round-off; coordinates whose perturbation changes either pattern are
reported as kinks and excluded from the comparison.
"""

from __future__ import annotations

import numpy as np

from curvecast.dynamics_predictor import PredictorModel, QueryBatch, loss_and_grads


def _tail(model: PredictorModel, batch: QueryBatch, layer: int, Z: np.ndarray):
    """Finish the forward pass from pre-activations ``Z`` (P, B, n) of ``layer``."""
    last = len(model.weights) - 1
    masks = []
    for i in range(layer, last):
        masks.append(Z > 0)
        Z = np.maximum(Z, 0.0) @ model.weights[i + 1] + model.biases[i + 1]
    theta = model.theta_mean + model.theta_scale * Z
    pred = np.einsum("btk,pbk->pbt", batch.basis, theta)
    resid = pred - batch.targets
    pattern = np.concatenate([m.reshape(len(Z), -1) for m in masks]
                             + [(resid > 0).reshape(len(Z), -1)], axis=1)
    return np.abs(resid), pattern


def layer_check(model: PredictorModel, batch: QueryBatch, layer: int, h: float = 1e-5):
    """Numeric gradients of weights and bias of ``layer`` plus their kink masks."""
    _, acts = model.forward(batch.inputs)
    A = acts[layer]                                   # (B, n_in)
    Z0 = A @ model.weights[layer] + model.biases[layer]
    _, base = _tail(model, batch, layer, Z0[None])
    n_in, n_out = model.weights[layer].shape
    eye = np.eye(n_out)
    dW = np.einsum("ba,oc->aobc", A, eye).reshape(n_in * n_out, *Z0.shape)
    db = np.broadcast_to(eye[:, None, :], (n_out, *Z0.shape))
    out = []
    for delta, shape in ((dW, (n_in, n_out)), (db, (n_out,))):
        ap, pp = _tail(model, batch, layer, Z0[None] + h * delta)
        am, pm = _tail(model, batch, layer, Z0[None] - h * delta)
        kink = np.any(pp != base, axis=1) | np.any(pm != base, axis=1)
        # difference point-wise before summing to limit cancellation
        diff = (batch.weights * (ap - am)).sum(axis=(1, 2)) / len(batch.weights)
        out.append((diff / (2 * h)).reshape(shape))
        out.append(kink.reshape(shape))
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-7) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)),
                                                   floor)


def check_model(model: PredictorModel, batch: QueryBatch, h: float = 1e-5):
    """Return (max relative error over smooth coordinates, kink count, coordinate count)."""
    _, gW, gb = loss_and_grads(model, batch)
    worst, kinks, total = 0.0, 0, 0
    for layer in range(len(model.weights)):
        nW, kW, nb, kb = layer_check(model, batch, layer, h)
        for analytic, numeric, kink in ((gW[layer], nW, kW), (gb[layer], nb, kb)):
            err = relative_error(analytic, numeric)[~kink]
            if err.size:
                worst = max(worst, float(err.max()))
            kinks += int(kink.sum())
            total += kink.size
    return worst, kinks, total


def random_case(seed: int, n_records: int = 4, horizon: int = 30):
    """A randomly initialised model with random inputs, output scaling and curves."""
    from curvecast.dynamics_predictor import CurveRecord, init_model, make_batch

    rng = np.random.default_rng(seed)
    model = init_model(seed, input_mean=rng.normal(size=24), input_sd=rng.uniform(0.5, 2, 24),
                       theta_mean=rng.normal(0, 0.1, 4), theta_scale=rng.uniform(0.01, 0.2, 4))
    for b in model.biases:
        b += rng.normal(0, 0.05, b.shape)
    records = [CurveRecord(f"r{i}", rng.normal(size=24), rng.uniform(0.3, 0.9, horizon),
                           "binclass") for i in range(n_records)]
    return model, make_batch(records)

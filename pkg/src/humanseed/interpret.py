"""Path-integral attributions for trained MLPs.

Everything is computed analytically along the straight line from a baseline
``x'`` to the input ``x`` and integrated with the midpoint rule:

* integrated gradients: ``(x_i - x'_i) * mean_a dF/dx_i``
* neuron conductance of hidden unit y: ``(x_i - x'_i) * mean_a dF/dy * dy/dx_i``
  (summed over i for the neuron total)
* layer feature importance: ``sum_y Cond[y] * IG[y][i]`` where ``IG[y]`` is the
  integrated gradient of unit y's own activation.

With relu hidden units the integrands jump wherever a unit switches on or off
along the path. Those switching points are located exactly (pre-activations
are piecewise linear in the path parameter) and added to the uniform grid
when ``align_kinks`` is set, so every midpoint cell has a smooth integrand.

F is the network's output probability. Hidden layers are numbered from 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import Dataset
from .errors import ModelError
from .models import _ACTIVATIONS, MLP

METHODS = ("integrated_gradients", "conductance", "layer_feature_importance")


@dataclass(frozen=True)
class AttributionConfig:
    baseline: np.ndarray | None = None
    steps: int = 50
    align_kinks: bool = True

    def __post_init__(self):
        if self.steps < 1:
            raise ModelError(f"steps must be >= 1, got {self.steps}")

    def baseline_for(self, n_features: int) -> np.ndarray:
        if self.baseline is None:
            return np.zeros(n_features)
        b = np.asarray(self.baseline, dtype=np.float64)
        if b.shape != (n_features,):
            raise ModelError(f"baseline has {b.size} entries, model expects {n_features}")
        return b


@dataclass(frozen=True, eq=False)
class AttributionResult:
    ig: np.ndarray
    conductance: np.ndarray
    combined: np.ndarray
    completeness_gap: float
    conservation_gap: float
    layer: int
    steps: int


def _kink_points(m: MLP, x: np.ndarray, baseline: np.ndarray) -> np.ndarray:
    """Path parameters in (0, 1) where some hidden pre-activation crosses 0.

    Between consecutive breakpoints found for layers < l the activation
    pattern of those layers is fixed, so layer l's pre-activations are affine
    there and their roots follow by linear interpolation.
    """
    bp = np.array([0.0, 1.0])
    direction = x - baseline
    for l in range(m.n_hidden_layers):
        zs, _ = m.forward_cache(baseline[None, :] + bp[:, None] * direction[None, :])
        za, zb = zs[l][:-1], zs[l][1:]
        cross = za * zb < 0
        if cross.any():
            lo, hi = bp[:-1, None], bp[1:, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                roots = lo + (hi - lo) * za / (za - zb)
            bp = np.unique(np.concatenate([bp, roots[cross]]))
    return bp


def _path(m: MLP, x: np.ndarray, baseline: np.ndarray, cfg: AttributionConfig):
    """Midpoints and widths of the integration cells along the path."""
    edges = np.linspace(0.0, 1.0, cfg.steps + 1)
    if cfg.align_kinks and m.hidden_activation == "relu" and np.any(x != baseline):
        edges = np.unique(np.concatenate([edges, _kink_points(m, x, baseline)]))
    widths = np.diff(edges)
    keep = widths > 0
    alphas = ((edges[:-1] + edges[1:]) / 2)[keep]
    points = baseline[None, :] + alphas[:, None] * (x - baseline)[None, :]
    return points, widths[keep]


def _check_layer(m: MLP, layer: int) -> None:
    if not 1 <= layer <= m.n_hidden_layers:
        raise ModelError(f"layer must be in 1..{m.n_hidden_layers}, got {layer}")


def _check_input(m: MLP, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.n_features,):
        raise ModelError(f"input has shape {x.shape}, model expects ({m.n_features},)")
    if not m.all_finite():
        raise ModelError("model has non-finite parameters")
    return x


def output_value(m: MLP, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return m.forward_cache(X)[1][-1][:, 0]


def layer_gradients(m: MLP, X: np.ndarray, layer: int) -> tuple[np.ndarray, np.ndarray]:
    """For hidden layer ``layer`` at each row of X return

    * ``dF_dy``: (n, units) gradient of the output w.r.t. the layer activations
    * ``dy_dx``: (n, units, F) Jacobian of the activations w.r.t. the input

    The relu derivative at exactly 0 is taken as 0.
    """
    _, dact = _ACTIVATIONS[m.hidden_activation]
    _, dout = _ACTIVATIONS[m.output_activation]
    zs, _ = m.forward_cache(X)
    n, F = X.shape

    J = np.broadcast_to(np.eye(F), (n, F, F))
    for l in range(layer):
        J = dact(zs[l])[:, :, None] * np.einsum("ji,njf->nif", m.weights[l], J)

    g = dout(zs[-1])  # dF/dz at the output, (n, 1)
    for l in range(len(m.weights) - 1, layer - 1, -1):
        g_act = g @ m.weights[l].T  # gradient w.r.t. acts[l]
        if l == layer:
            break
        g = g_act * dact(zs[l - 1])
    return g_act, J


def input_gradients(m: MLP, X: np.ndarray) -> np.ndarray:
    _, dact = _ACTIVATIONS[m.hidden_activation]
    _, dout = _ACTIVATIONS[m.output_activation]
    zs, _ = m.forward_cache(X)
    g = dout(zs[-1])
    for l in range(len(m.weights) - 1, -1, -1):
        g = g @ m.weights[l].T
        if l:
            g = g * dact(zs[l - 1])
    return g


def integrated_gradients(m: MLP, x, cfg: AttributionConfig = AttributionConfig()) -> np.ndarray:
    x = _check_input(m, x)
    base = cfg.baseline_for(m.n_features)
    points, w = _path(m, x, base, cfg)
    return (x - base) * (w @ input_gradients(m, points))


def _layer_terms(m: MLP, x: np.ndarray, layer: int, cfg: AttributionConfig):
    """Per-unit, per-feature conductance and per-unit integrated gradients."""
    base = cfg.baseline_for(m.n_features)
    points, w = _path(m, x, base, cfg)
    dF_dy, dy_dx = layer_gradients(m, points, layer)
    delta = (x - base)[None, :]
    cond = delta * np.einsum("n,nu,nuf->uf", w, dF_dy, dy_dx)  # (units, F)
    unit_ig = delta * np.einsum("n,nuf->uf", w, dy_dx)  # (units, F)
    return cond, unit_ig


def neuron_conductance(m: MLP, layer: int, neuron: int, x,
                       cfg: AttributionConfig = AttributionConfig(),
                       per_feature: bool = False):
    _check_layer(m, layer)
    units = m.layer_sizes[layer]
    if not 0 <= neuron < units:
        raise ModelError(f"neuron must be in 0..{units - 1}, got {neuron}")
    x = _check_input(m, x)
    cond, _ = _layer_terms(m, x, layer, cfg)
    return cond[neuron].copy() if per_feature else float(cond[neuron].sum())


def layer_conductance(m: MLP, layer: int, x, cfg: AttributionConfig = AttributionConfig()) -> np.ndarray:
    _check_layer(m, layer)
    x = _check_input(m, x)
    cond, _ = _layer_terms(m, x, layer, cfg)
    return cond.sum(axis=1)


def unit_integrated_gradients(m: MLP, layer: int, x, cfg: AttributionConfig = AttributionConfig()) -> np.ndarray:
    """(units, F): attribution of each input feature to each unit's activation."""
    _check_layer(m, layer)
    x = _check_input(m, x)
    return _layer_terms(m, x, layer, cfg)[1]


def layer_feature_importance(m: MLP, layer: int, x, cfg: AttributionConfig = AttributionConfig()) -> np.ndarray:
    _check_layer(m, layer)
    x = _check_input(m, x)
    cond, unit_ig = _layer_terms(m, x, layer, cfg)
    return cond.sum(axis=1) @ unit_ig


def attribute(m: MLP, x, layer: int = 1, cfg: AttributionConfig = AttributionConfig()) -> AttributionResult:
    _check_layer(m, layer)
    x = _check_input(m, x)
    base = cfg.baseline_for(m.n_features)
    cond, unit_ig = _layer_terms(m, x, layer, cfg)
    neuron_cond = cond.sum(axis=1)
    ig = integrated_gradients(m, x, cfg)
    delta_f = float(output_value(m, x)[0] - output_value(m, base)[0])
    return AttributionResult(
        ig=ig,
        conductance=neuron_cond,
        combined=neuron_cond @ unit_ig,
        completeness_gap=abs(float(ig.sum()) - delta_f),
        conservation_gap=abs(float(neuron_cond.sum()) - delta_f),
        layer=layer,
        steps=cfg.steps,
    )


def dataset_average_attributions(m: MLP, ds: Dataset, layer: int = 1,
                                 cfg: AttributionConfig = AttributionConfig()) -> AttributionResult:
    if len(ds) == 0:
        raise ModelError("cannot attribute over an empty dataset")
    results = [attribute(m, x, layer, cfg) for x in ds.X]
    return AttributionResult(
        ig=np.mean([r.ig for r in results], axis=0),
        conductance=np.mean([r.conductance for r in results], axis=0),
        combined=np.mean([r.combined for r in results], axis=0),
        completeness_gap=float(np.mean([r.completeness_gap for r in results])),
        conservation_gap=float(np.mean([r.conservation_gap for r in results])),
        layer=layer,
        steps=cfg.steps,
    )


def attribution_rows(res: AttributionResult, feature_names: Sequence[str],
                     methods: Sequence[str] = METHODS) -> list[tuple]:
    """Plot-ready rows (entity, value, method, layer, steps)."""
    rows = []
    for method in methods:
        if method == "integrated_gradients":
            rows += [(f, float(v), method, 0, res.steps) for f, v in zip(feature_names, res.ig)]
        elif method == "conductance":
            rows += [(f"neuron_{j}", float(v), method, res.layer, res.steps)
                     for j, v in enumerate(res.conductance)]
        elif method == "layer_feature_importance":
            rows += [(f, float(v), method, res.layer, res.steps) for f, v in zip(feature_names, res.combined)]
        else:
            raise ModelError(f"unknown attribution method {method!r}")
    return rows


def write_attribution_csv(path, rows) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["entity", "value", "method", "layer", "steps"])
        for entity, value, method, layer, steps in rows:
            w.writerow([entity, repr(value), method, layer, steps])

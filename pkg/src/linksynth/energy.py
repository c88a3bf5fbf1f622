"""Deformation energy of a linkage and its analytical derivatives.

    phi = sum_i w_i * (l_i - L_i)**2

with ``l_i`` the current link length and ``L_i`` its rest length. Derivative
blocks are built per link over ``(x_a, y_a, x_b, y_b)`` and scattered into the
free-coordinate slots; fixed nodes simply drop out.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .constraints import SQUARED_HESSIAN
from .model import Link, Mechanism


class NumericalDegeneracyError(ArithmeticError):
    pass


@dataclass(frozen=True)
class EnergyEvaluation:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray


@dataclass(frozen=True)
class LinkArrays:
    """Link endpoints, rest lengths and weights packed for vectorized work."""

    ij: np.ndarray
    rest: np.ndarray
    weight: np.ndarray
    names: tuple[str, ...]
    # scatter plans keyed by the free-node tuple; depend only on ij
    _plans: dict = field(default_factory=dict, compare=False, repr=False)

    def scatter_plan(self, n_nodes: int, free: Sequence[int]):
        key = (n_nodes, tuple(free))
        plan = self._plans.get(key)
        if plan is None:
            n = 2 * len(free)
            slots = free_slots(n_nodes, free)
            idx = np.concatenate([slots[self.ij[:, 0]], slots[self.ij[:, 1]]], axis=1)  # (nb, 4)
            keep = idx >= 0
            mask = keep[:, :, None] & keep[:, None, :]
            pair = (idx[:, :, None] * n + idx[:, None, :])[mask]
            plan = self._plans[key] = (n, idx[keep], keep, pair, mask)
        return plan

    @classmethod
    def of(cls, m: Mechanism, rest: np.ndarray | None = None) -> "LinkArrays":
        return cls(
            ij=m.link_indices(),
            rest=m.rest_lengths() if rest is None else np.asarray(rest, dtype=float),
            weight=m.weights(),
            names=tuple(f"{l.i}-{l.j}" for l in m.links),
        )


# maps (Kxx, Kxy, Kyy) onto the flattened 4x4 block [[K, -K], [-K, K]]
_BLOCK_SELECT = np.zeros((3, 16))
for _r in range(4):
    for _c in range(4):
        _BLOCK_SELECT[(_r % 2) + (_c % 2), 4 * _r + _c] = 1.0 if (_r < 2) == (_c < 2) else -1.0


def link_length(pa, pb) -> float:
    return float(np.hypot(pb[0] - pa[0], pb[1] - pa[1]))


def free_slots(n_nodes: int, free: Sequence[int]) -> np.ndarray:
    """(N, 2) table of variable offsets per node coordinate, -1 for fixed ones."""
    slots = -np.ones((n_nodes, 2), dtype=int)
    for k, node in enumerate(free):
        slots[node] = (2 * k, 2 * k + 1)
    return slots


def _links(m: Mechanism | LinkArrays, rest) -> LinkArrays:
    if isinstance(m, LinkArrays):
        return m if rest is None else LinkArrays(m.ij, np.asarray(rest, float), m.weight, m.names, m._plans)
    return LinkArrays.of(m, rest)


def deformation_energy(coords: np.ndarray, m: Mechanism | LinkArrays, rest=None) -> float:
    """Weighted sum of squared length deviations at node coordinates ``coords``."""
    la = _links(m, rest)
    P = np.asarray(coords, dtype=float).reshape(-1, 2)
    d = P[la.ij[:, 1]] - P[la.ij[:, 0]]
    dev = np.hypot(d[:, 0], d[:, 1]) - la.rest
    return float(np.sum(la.weight * dev * dev))


def energy_derivatives(
    coords: np.ndarray,
    m: Mechanism | LinkArrays,
    free: Sequence[int] | None = None,
    rest=None,
) -> EnergyEvaluation:
    """Energy, gradient and Hessian over the coordinates of ``free`` nodes.

    ``free`` lists node indices in variable order; by default every floating
    node of ``m`` (which must then be a Mechanism).
    """
    la = _links(m, rest)
    P = np.asarray(coords, dtype=float).reshape(-1, 2)
    if free is None:
        if not isinstance(m, Mechanism):
            raise TypeError("free nodes must be given when passing LinkArrays")
        free = [k for k, n in enumerate(m.nodes) if not n.is_ground]
    n, gidx, keep, pair, mask = la.scatter_plan(len(P), free)

    a, b = la.ij[:, 0], la.ij[:, 1]
    d = P[b] - P[a]
    l = np.hypot(d[:, 0], d[:, 1])
    dev = l - la.rest
    w = la.weight
    value = float(np.sum(w * dev * dev))

    nb = len(l)
    zero_rest = la.rest == 0.0
    # direction undefined at zero length: u = 0, h = 2I (squared-form limit)
    collapsed = ~zero_rest & (l < 1e-12 * np.maximum(1.0, la.rest))
    if zero_rest.any() or collapsed.any():
        grads, hess = _general_blocks(d, l, dev, w, zero_rest, collapsed)
    else:
        # every block is [[K, -K], [-K, K]] with K = 2w (e e^T + dev/l (I - e e^T))
        ex, ey = d[:, 0] / l, d[:, 1] / l
        c, s = 2 * w, dev / l
        gx, gy = c * dev * ex, c * dev * ey
        grads = np.stack([-gx, -gy, gx, gy], axis=1)
        k = np.stack([c * (ex * ex + s * (1 - ex * ex)), c * ex * ey * (1 - s),
                      c * (ey * ey + s * (1 - ey * ey))], axis=1)
        hess = (k @ _BLOCK_SELECT).reshape(nb, 4, 4)

    bad = ~(np.isfinite(grads).all(axis=1) & np.isfinite(hess).all(axis=(1, 2)))
    if bad.any() or not np.isfinite(value):
        k = int(np.argmax(bad)) if bad.any() else 0
        raise NumericalDegeneracyError(f"non-finite energy derivatives at link {la.names[k]}")

    gradient = np.bincount(gidx, weights=grads[keep], minlength=n)
    hessian = np.bincount(pair, weights=hess[mask], minlength=n * n).reshape(n, n)
    return EnergyEvaluation(value, gradient, hessian)


def _general_blocks(d, l, dev, w, zero_rest, collapsed):
    nb = len(l)
    safe = np.where(collapsed | (l == 0.0), 1.0, l)
    lx, ly = d[:, 0] / safe, d[:, 1] / safe
    u = np.stack([-lx, -ly, lx, ly], axis=1)
    u[collapsed] = 0.0
    blk = np.empty((nb, 2, 2))
    blk[:, 0, 0] = (1 - lx * lx) / safe
    blk[:, 0, 1] = blk[:, 1, 0] = -lx * ly / safe
    blk[:, 1, 1] = (1 - ly * ly) / safe
    h = np.empty((nb, 4, 4))
    h[:, :2, :2] = h[:, 2:, 2:] = blk
    h[:, :2, 2:] = h[:, 2:, :2] = -blk
    h[collapsed] = 2.0 * np.eye(4)
    grads = (2 * w * dev)[:, None] * u
    hess = (2 * w)[:, None, None] * (u[:, :, None] * u[:, None, :] + dev[:, None, None] * h)
    if zero_rest.any():
        # phi = w*l**2 is smooth everywhere; use it directly
        wz = w[zero_rest]
        grads[zero_rest] = 2 * wz[:, None] * np.stack([-d[zero_rest, 0], -d[zero_rest, 1],
                                                         d[zero_rest, 0], d[zero_rest, 1]], axis=1)
        hess[zero_rest] = wz[:, None, None] * SQUARED_HESSIAN
    return grads, hess


def link_lengths(coords: np.ndarray, links: Sequence[Link], index: dict[str, int]) -> np.ndarray:
    P = np.asarray(coords, dtype=float).reshape(-1, 2)
    return np.array([link_length(P[index[l.i]], P[index[l.j]]) for l in links])

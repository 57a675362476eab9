"""Shared pieces for the model implementations: initialization, graph
helpers, minibatching and training-loop utilities."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from gradrec import engine as E
from gradrec.data import InteractionTable
from gradrec.errors import GradrecError, TrainingDivergedError

Array = np.ndarray

INIT_SCALE = 0.01  # embeddings and weights start at Normal(0, 0.01^2)


def init_normal(rng: np.random.Generator, *shape: int) -> Array:
    return rng.normal(0.0, INIT_SCALE, size=shape)


def init_layer(rng: np.random.Generator, fan_in: int, *shape: int) -> Array:
    """Fan-in-scaled init for relu layer weights.

    The flat Normal(0, 0.01^2) used for embeddings starves deep towers:
    activations shrink geometrically and the loss cannot be driven down
    within a sane epoch budget, so dense layers scale with sqrt(2/fan_in).
    """
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def add_rowvec(x: E.Node, b: E.Node) -> E.Node:
    """x + b for a batched x of shape (B, m) and vector b of shape (m,).

    The engine only broadcasts scalars, so the bias is lifted to (B, m)
    through a ones-column matmul.
    """
    batch = x.value.shape[0]
    ones = E.const(np.ones((batch, 1)))
    return x + E.matmul(ones, b.reshape((1, b.value.shape[0])))


def affine(x: E.Node, w: E.Node, b: E.Node) -> E.Node:
    """x @ w + b with the same row-vector bias lift."""
    return add_rowvec(E.matmul(x, w), b)


def row_sq_norm(x: E.Node) -> E.Node:
    """Per-row squared L2 norm of a (B, k) node, shape (B,)."""
    return (x * x).sum(axis=1)


def bce_from_logits(logits: E.Node, labels: Array) -> E.Node:
    """Mean binary cross-entropy, computed stably from logits:
    softplus(z) - y*z."""
    y = E.const(np.asarray(labels, dtype=np.float64))
    return (logits.softplus() - y * logits).mean()


def check_finite(loss_value: float, epoch: int) -> None:
    if not np.isfinite(loss_value):
        raise TrainingDivergedError(epoch, float(loss_value))


def gradient_step(params: dict[str, Array], trainable, build_loss, optimizer,
                  epoch: int) -> float:
    """One tape build / backward / optimizer step over the named subset.

    ``build_loss`` receives fresh leaves bound to the current parameter
    arrays; ``params`` is updated in place with the stepped arrays. The
    loss value is returned for tracing.
    """
    leaves = {name: E.param(params[name], name) for name in trainable}
    loss = build_loss(leaves)
    value = float(loss.value)
    check_finite(value, epoch)
    grads = E.backward(loss, wrt=leaves.values())
    stepped = optimizer.step({n: params[n] for n in trainable},
                             {n: grads[leaves[n]] for n in trainable})
    params.update(stepped)
    return value


def minibatches(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[Array]:
    """Seeded shuffled index batches covering range(n)."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


class NegativeSampler:
    """Uniform sampling over each user's unconsumed items, with the
    per-user candidate arrays built once."""

    def __init__(self, table: InteractionTable | None = None, *, n_items: int | None = None,
                 consumed: dict[int, set[int]] | None = None, n_users: int | None = None):
        if table is not None:
            n_items, n_users, consumed = table.n_items, table.n_users, table.consumed()
        self.n_items = n_items
        self._candidates: dict[int, Array] = {}
        for user in range(n_users):
            blocked = consumed.get(user, set())
            cand = np.setdiff1d(np.arange(n_items), np.fromiter(blocked, dtype=np.int64,
                                                                count=len(blocked)))
            self._candidates[user] = cand

    def has_candidates(self, user: int) -> bool:
        return self._candidates[user].size > 0

    def draw(self, user: int, k: int, rng: np.random.Generator) -> Array:
        cand = self._candidates[user]
        if cand.size == 0:
            raise GradrecError(f"user {user} has consumed every item; nothing to sample")
        return cand[rng.integers(0, cand.size, size=k)]

    def draw_many(self, users: Array, k: int, rng: np.random.Generator) -> Array:
        """One row of k negatives per user; shape (len(users), k)."""
        out = np.empty((len(users), k), dtype=np.int64)
        for row, user in enumerate(users):
            out[row] = self.draw(int(user), k, rng)
        return out


def clip_rows_to_ball(arr: Array, radius: float = 1.0) -> Array:
    """Rescale rows with norm > radius back onto the sphere."""
    norms = np.linalg.norm(arr, axis=1, keepdims=True)
    scale = np.where(norms > radius, radius / np.maximum(norms, 1e-300), 1.0)
    return arr * scale


def interactions_as_arrays(table: InteractionTable) -> tuple[Array, Array, Array]:
    users = np.array([x.user for x in table.interactions], dtype=np.int64)
    items = np.array([x.item for x in table.interactions], dtype=np.int64)
    ratings = np.array([x.rating for x in table.interactions], dtype=np.float64)
    return users, items, ratings

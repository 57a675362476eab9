"""Rating-prediction models: biased SVD, factorization machines, and an
item-based autoencoder.

All three train on unclipped scores and clip served predictions to the
rating range observed at fit time.
"""

from __future__ import annotations

import numpy as np

from gradrec import engine as E
from gradrec.data import InteractionTable, SparseRow
from gradrec.errors import GradrecError
from gradrec.models import base

Array = np.ndarray


class BiasedSvd:
    """mu + b_u + b_i + p_u . q_i with L2 on biases and factors."""

    trainable = ("user_bias", "item_bias", "user_factors", "item_factors")

    def __init__(self, n_users: int, n_items: int, k: int, l2: float = 0.0,
                 global_mean: float = 0.0, rating_range: tuple[float, float] = (1.0, 5.0),
                 seed: int = 0):
        if k < 1:
            raise GradrecError(f"factor dimension must be >= 1, got {k}")
        rng = np.random.default_rng(seed)
        self.l2 = l2
        self.params: dict[str, Array] = {
            "global_mean": np.asarray(float(global_mean)),
            "rating_min": np.asarray(float(rating_range[0])),
            "rating_max": np.asarray(float(rating_range[1])),
            "user_bias": np.zeros(n_users),
            "item_bias": np.zeros(n_items),
            "user_factors": base.init_normal(rng, n_users, k),
            "item_factors": base.init_normal(rng, n_items, k),
        }

    @classmethod
    def for_table(cls, table: InteractionTable, k: int, l2: float, seed: int) -> "BiasedSvd":
        return cls(table.n_users, table.n_items, k, l2=l2, global_mean=table.global_mean,
                   rating_range=table.rating_range, seed=seed)

    @classmethod
    def from_params(cls, params: dict[str, Array], l2: float = 0.0) -> "BiasedSvd":
        model = cls.__new__(cls)
        model.l2 = l2
        model.params = params
        return model

    @property
    def n_users(self) -> int:
        return self.params["user_bias"].shape[0]

    @property
    def n_items(self) -> int:
        return self.params["item_bias"].shape[0]

    def build_loss(self, leaves: dict[str, E.Node], users: Array, items: Array,
                   ratings: Array) -> E.Node:
        bu = E.embedding_lookup(leaves["user_bias"], users)
        bi = E.embedding_lookup(leaves["item_bias"], items)
        pu = E.embedding_lookup(leaves["user_factors"], users)
        qi = E.embedding_lookup(leaves["item_factors"], items)
        pred = float(self.params["global_mean"]) + bu + bi + (pu * qi).sum(axis=1)
        err = E.const(ratings) - pred
        reg = self.l2 * (bu * bu + bi * bi + base.row_sq_norm(pu) + base.row_sq_norm(qi))
        return (err * err + reg).mean()

    def fit(self, table: InteractionTable, optimizer, epochs: int, batch_size: int,
            seed: int) -> list[float]:
        users, items, ratings = base.interactions_as_arrays(table)
        if users.size == 0:
            raise GradrecError("empty training set")
        rng = np.random.default_rng(seed)
        trace = []
        for epoch in range(epochs):
            total, seen = 0.0, 0
            for idx in base.minibatches(users.size, batch_size, rng):
                value = base.gradient_step(
                    self.params, self.trainable,
                    lambda lv: self.build_loss(lv, users[idx], items[idx], ratings[idx]),
                    optimizer, epoch)
                total += value * idx.size
                seen += idx.size
            trace.append(total / seen)
        return trace

    def raw_score(self, user: int, item: int) -> float:
        p = self.params
        return float(p["global_mean"] + p["user_bias"][user] + p["item_bias"][item]
                     + p["user_factors"][user] @ p["item_factors"][item])

    def predict(self, user: int, item: int) -> float:
        if not (0 <= user < self.n_users and 0 <= item < self.n_items):
            raise GradrecError(f"id out of range: user={user}, item={item}")
        lo, hi = float(self.params["rating_min"]), float(self.params["rating_max"])
        return float(np.clip(self.raw_score(user, item), lo, hi))


class FactorizationMachine:
    """Degree-2 FM over libfm-style sparse rows, using the linear-time
    pairwise identity: 0.5 * sum_f [(X v_f)^2 - X^2 v_f^2]."""

    trainable = ("intercept", "linear", "factors")

    def __init__(self, n_features: int, k: int, l2: tuple[float, float, float] | float = 0.0,
                 task: str = "regression", label_range: tuple[float, float] = (0.0, 1.0),
                 seed: int = 0):
        if task not in ("regression", "binary"):
            raise GradrecError(f"unknown FM task {task!r}")
        if isinstance(l2, (int, float)):
            l2 = (float(l2),) * 3
        rng = np.random.default_rng(seed)
        self.task = task
        self.l2 = l2
        self.params: dict[str, Array] = {
            "label_min": np.asarray(float(label_range[0])),
            "label_max": np.asarray(float(label_range[1])),
            "intercept": np.asarray(0.0),
            "linear": np.zeros(n_features),
            "factors": base.init_normal(rng, n_features, k),
        }

    @classmethod
    def for_rows(cls, rows: list[SparseRow], n_features: int, k: int, l2, task: str,
                 seed: int) -> "FactorizationMachine":
        labels = [r.label for r in rows]
        return cls(n_features, k, l2=l2, task=task,
                   label_range=(min(labels), max(labels)), seed=seed)

    @classmethod
    def from_params(cls, params: dict[str, Array], task: str = "regression",
                    l2=0.0) -> "FactorizationMachine":
        model = cls.__new__(cls)
        model.task = task
        model.l2 = (l2,) * 3 if isinstance(l2, (int, float)) else l2
        model.params = params
        return model

    @property
    def n_features(self) -> int:
        return self.params["linear"].shape[0]

    def _dense(self, rows: list[SparseRow]) -> tuple[Array, Array]:
        x = np.zeros((len(rows), self.n_features))
        y = np.empty(len(rows))
        for r, row in enumerate(rows):
            y[r] = row.label
            for idx, val in row.features:
                if idx >= self.n_features:
                    raise GradrecError(f"feature index {idx} out of range "
                                       f"(n_features={self.n_features})")
                x[r, idx] = val
        return x, y

    def build_loss(self, leaves: dict[str, E.Node], rows: list[SparseRow]) -> E.Node:
        x, y = self._dense(rows)
        xc, x2c = E.const(x), E.const(x * x)
        w0, w, v = leaves["intercept"], leaves["linear"], leaves["factors"]
        lin = E.matmul(xc, w)
        xv = E.matmul(xc, v)
        pair = 0.5 * ((xv * xv).sum(axis=1) - E.matmul(x2c, v * v).sum(axis=1))
        pred = w0 + lin + pair
        if self.task == "regression":
            err = E.const(y) - pred
            data = (err * err).mean()
        else:
            if not np.all(np.isin(y, (0.0, 1.0))):
                raise GradrecError("binary FM requires labels in {0, 1}")
            data = base.bce_from_logits(pred, y)
        reg = (self.l2[0] * (w0 * w0) + self.l2[1] * (w * w).sum()
               + self.l2[2] * (v * v).sum())
        return data + reg

    def fit(self, rows: list[SparseRow], optimizer, epochs: int, batch_size: int,
            seed: int) -> list[float]:
        if not rows:
            raise GradrecError("empty training set")
        rng = np.random.default_rng(seed)
        trace = []
        for epoch in range(epochs):
            total, seen = 0.0, 0
            for idx in base.minibatches(len(rows), batch_size, rng):
                batch = [rows[i] for i in idx]
                value = base.gradient_step(self.params, self.trainable,
                                           lambda lv: self.build_loss(lv, batch),
                                           optimizer, epoch)
                total += value * len(batch)
                seen += len(batch)
            trace.append(total / seen)
        return trace

    def raw_score(self, row: SparseRow) -> float:
        p = self.params
        acc = float(p["intercept"])
        sums = np.zeros(p["factors"].shape[1])
        sq_sums = np.zeros(p["factors"].shape[1])
        for idx, val in row.features:
            if idx >= self.n_features:
                raise GradrecError(f"feature index {idx} out of range")
            acc += p["linear"][idx] * val
            contrib = p["factors"][idx] * val
            sums += contrib
            sq_sums += contrib * contrib
        return acc + 0.5 * float((sums * sums - sq_sums).sum())

    def predict(self, row: SparseRow) -> float:
        raw = self.raw_score(row)
        if self.task == "binary":
            return float(np.exp(-np.logaddexp(0.0, -raw)))
        lo, hi = float(self.params["label_min"]), float(self.params["label_max"])
        return float(np.clip(raw, lo, hi))


class ItemAutoRec:
    """Item-based autoencoder: reconstructs an item's rating column over
    users through one sigmoid hidden layer; only observed entries carry
    loss."""

    trainable = ("encoder_w", "encoder_b", "decoder_w", "decoder_b")

    def __init__(self, n_users: int, n_items: int, hidden: int, l2: float = 0.0,
                 rating_range: tuple[float, float] = (1.0, 5.0), seed: int = 0):
        rng = np.random.default_rng(seed)
        self.l2 = l2
        self.params: dict[str, Array] = {
            "rating_min": np.asarray(float(rating_range[0])),
            "rating_max": np.asarray(float(rating_range[1])),
            "encoder_w": base.init_normal(rng, hidden, n_users),
            "encoder_b": np.zeros(hidden),
            "decoder_w": base.init_normal(rng, n_users, hidden),
            "decoder_b": np.zeros(n_users),
        }
        # train-time rating matrix, filled by fit(); needed to build the
        # input column when serving predictions
        self.columns = np.zeros((n_items, n_users))
        self.mask = np.zeros((n_items, n_users))

    @classmethod
    def for_table(cls, table: InteractionTable, hidden: int, l2: float,
                  seed: int) -> "ItemAutoRec":
        return cls(table.n_users, table.n_items, hidden, l2=l2,
                   rating_range=table.rating_range, seed=seed)

    @classmethod
    def from_params(cls, params: dict[str, Array], n_items: int, l2: float = 0.0) -> "ItemAutoRec":
        model = cls.__new__(cls)
        model.l2 = l2
        model.params = params
        n_users = params["decoder_b"].shape[0]
        model.columns = np.zeros((n_items, n_users))
        model.mask = np.zeros((n_items, n_users))
        return model

    @property
    def n_users(self) -> int:
        return self.params["decoder_b"].shape[0]

    def load_columns(self, table: InteractionTable) -> None:
        self.columns[:] = 0.0
        self.mask[:] = 0.0
        for x in table.interactions:
            self.columns[x.item, x.user] = x.rating
            self.mask[x.item, x.user] = 1.0

    def build_loss(self, leaves: dict[str, E.Node], item_ids: Array) -> E.Node:
        # mask the input too: only observed ratings may enter the encoder
        r = E.const(self.columns[item_ids] * self.mask[item_ids])  # (B, n_users)
        m = E.const(self.mask[item_ids])
        hidden = base.add_rowvec(E.matmul(r, leaves["encoder_w"].T),
                                 leaves["encoder_b"]).sigmoid()
        out = base.add_rowvec(E.matmul(hidden, leaves["decoder_w"].T), leaves["decoder_b"])
        diff = (r - out) * m
        data = (diff * diff).sum()
        reg = 0.5 * self.l2 * ((leaves["decoder_w"] * leaves["decoder_w"]).sum()
                               + (leaves["encoder_w"] * leaves["encoder_w"]).sum())
        return data + reg

    def fit(self, table: InteractionTable, optimizer, epochs: int, seed: int,
            batch_size: int | None = None) -> list[float]:
        if not table.interactions:
            raise GradrecError("empty training set")
        self.load_columns(table)
        n_items = self.columns.shape[0]
        if batch_size is None:
            batch_size = n_items
        rng = np.random.default_rng(seed)
        trace = []
        for epoch in range(epochs):
            total = 0.0
            for idx in base.minibatches(n_items, batch_size, rng):
                total += base.gradient_step(self.params, self.trainable,
                                            lambda lv: self.build_loss(lv, idx),
                                            optimizer, epoch)
            trace.append(total)
        return trace

    def reconstruct(self, column: Array) -> Array:
        """Raw reconstruction of a full rating column (no clipping)."""
        p = self.params
        z = 1.0 / (1.0 + np.exp(-(p["encoder_w"] @ column + p["encoder_b"])))
        return p["decoder_w"] @ z + p["decoder_b"]

    def reconstruct_observed(self, observed: list[tuple[int, float]]) -> Array:
        """Predicted column from a sparse (user, rating) list, clipped."""
        if not observed:
            raise GradrecError("autorec input column has no observed entries")
        column = np.zeros(self.n_users)
        for user, rating in observed:
            column[user] = rating
        lo, hi = float(self.params["rating_min"]), float(self.params["rating_max"])
        return np.clip(self.reconstruct(column), lo, hi)

    def predict(self, user: int, item: int) -> float:
        lo, hi = float(self.params["rating_min"]), float(self.params["rating_max"])
        return float(np.clip(self.reconstruct(self.columns[item])[user], lo, hi))

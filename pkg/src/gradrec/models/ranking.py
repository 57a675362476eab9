"""Top-n implicit-feedback models: BPR matrix factorization, collaborative
metric learning, the GMF/MLP/NeuMF family, and a collaborative denoising
autoencoder."""

from __future__ import annotations

import logging

import numpy as np

from gradrec import engine as E
from gradrec.data import InteractionTable
from gradrec.errors import GradrecError
from gradrec.models import base

Array = np.ndarray


class BprMf:
    """Pairwise ranking MF: -ln sigma(p_u.q_i - p_u.q_j) plus L2."""

    trainable = ("user_factors", "item_factors")

    def __init__(self, n_users: int, n_items: int, k: int, l2: float = 0.0, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.l2 = l2
        self.params: dict[str, Array] = {
            "user_factors": base.init_normal(rng, n_users, k),
            "item_factors": base.init_normal(rng, n_items, k),
        }

    @classmethod
    def from_params(cls, params: dict[str, Array], l2: float = 0.0) -> "BprMf":
        model = cls.__new__(cls)
        model.l2 = l2
        model.params = params
        return model

    def build_loss(self, leaves: dict[str, E.Node], users: Array, pos: Array,
                   neg: Array) -> E.Node:
        pu = E.embedding_lookup(leaves["user_factors"], users)
        qi = E.embedding_lookup(leaves["item_factors"], pos)
        qj = E.embedding_lookup(leaves["item_factors"], neg)
        x = (pu * qi).sum(axis=1) - (pu * qj).sum(axis=1)
        data = (-1.0 * x).softplus()  # -ln sigma(x)
        reg = self.l2 * (base.row_sq_norm(pu) + base.row_sq_norm(qi) + base.row_sq_norm(qj))
        return (data + reg).mean()

    def triplet_loss(self, user: int, pos: int, neg: int) -> float:
        leaves = {n: E.param(self.params[n], n) for n in self.trainable}
        users = np.array([user])
        return float(self.build_loss(leaves, users, np.array([pos]), np.array([neg])).value)

    def fit(self, table: InteractionTable, optimizer, epochs: int, batch_size: int,
            seed: int, neg_per_pos: int = 1, on_step=None) -> list[float]:
        users, items, _ = base.interactions_as_arrays(table)
        if users.size == 0:
            raise GradrecError("empty training set")
        sampler = base.NegativeSampler(table)
        keep = np.array([sampler.has_candidates(int(u)) for u in users])
        if not np.all(keep):
            logging.getLogger(__name__).info(
                "skipping %d positives of fully-saturated users", int((~keep).sum()))
            users, items = users[keep], items[keep]
        rng = np.random.default_rng(seed)
        trace = []
        for epoch in range(epochs):
            total, seen = 0.0, 0
            for idx in base.minibatches(users.size, batch_size, rng):
                bu, bi = users[idx], items[idx]
                bj = sampler.draw_many(bu, neg_per_pos, rng)
                # one (u, i, j) triplet per sampled negative
                bu_r = np.repeat(bu, neg_per_pos)
                bi_r = np.repeat(bi, neg_per_pos)
                value = base.gradient_step(
                    self.params, self.trainable,
                    lambda lv: self.build_loss(lv, bu_r, bi_r, bj.ravel()),
                    optimizer, epoch)
                if on_step is not None:
                    on_step(self.params)
                total += value * idx.size
                seen += idx.size
            trace.append(total / seen)
        return trace

    def score(self, user: int, item: int) -> float:
        return float(self.params["user_factors"][user] @ self.params["item_factors"][item])


class Cml:
    """Collaborative metric learning: hinge on squared distances with all
    embedding rows projected into the unit ball after every step."""

    trainable = ("user_points", "item_points")

    def __init__(self, n_users: int, n_items: int, k: int, margin: float = 0.5, seed: int = 0):
        if margin <= 0:
            raise GradrecError(f"margin must be > 0, got {margin}")
        rng = np.random.default_rng(seed)
        self.margin = margin
        self.params: dict[str, Array] = {
            "user_points": base.init_normal(rng, n_users, k),
            "item_points": base.init_normal(rng, n_items, k),
        }

    @classmethod
    def from_params(cls, params: dict[str, Array], margin: float = 0.5) -> "Cml":
        model = cls.__new__(cls)
        model.margin = margin
        model.params = params
        return model

    def build_loss(self, leaves: dict[str, E.Node], users: Array, pos: Array,
                   neg: Array) -> E.Node:
        """users/pos/neg are flat triplet arrays (one row per sampled pair);
        loss is summed over pairs and averaged per positive."""
        uu = E.embedding_lookup(leaves["user_points"], users)
        vi = E.embedding_lookup(leaves["item_points"], pos)
        vj = E.embedding_lookup(leaves["item_points"], neg)
        d_pos = E.sq_l2_dist(uu, vi)
        d_neg = E.sq_l2_dist(uu, vj)
        return (self.margin + d_pos - d_neg).relu().sum()

    def pair_loss(self, user: int, pos: int, neg_set: list[int]) -> float:
        leaves = {n: E.param(self.params[n], n) for n in self.trainable}
        users = np.full(len(neg_set), user)
        pos_arr = np.full(len(neg_set), pos)
        return float(self.build_loss(leaves, users, pos_arr, np.array(neg_set)).value)

    def project(self) -> None:
        for name in self.trainable:
            self.params[name] = base.clip_rows_to_ball(self.params[name], 1.0)

    def fit(self, table: InteractionTable, optimizer, epochs: int, batch_size: int,
            seed: int, neg_per_pos: int = 4, on_step=None) -> list[float]:
        users, items, _ = base.interactions_as_arrays(table)
        if users.size == 0:
            raise GradrecError("empty training set")
        sampler = base.NegativeSampler(table)
        rng = np.random.default_rng(seed)
        trace = []
        for epoch in range(epochs):
            total, seen = 0.0, 0
            for idx in base.minibatches(users.size, batch_size, rng):
                bu, bi = users[idx], items[idx]
                bj = sampler.draw_many(bu, neg_per_pos, rng)
                bu_r = np.repeat(bu, neg_per_pos)
                bi_r = np.repeat(bi, neg_per_pos)
                value = base.gradient_step(
                    self.params, self.trainable,
                    lambda lv: self.build_loss(lv, bu_r, bi_r, bj.ravel()) * (1.0 / idx.size),
                    optimizer, epoch)
                self.project()
                if on_step is not None:
                    on_step(self.params)
                total += value * idx.size
                seen += idx.size
            trace.append(total / seen)
        return trace

    def score(self, user: int, item: int) -> float:
        d = self.params["user_points"][user] - self.params["item_points"][item]
        return -float(d @ d)


class NeuMf:
    """GMF, MLP and their fused NeuMF variant over shared parameter
    storage; the variant decides which parts the graph (and therefore
    training) touches."""

    VARIANTS = ("gmf", "mlp", "neumf")

    def __init__(self, n_users: int, n_items: int, k: int, variant: str = "neumf",
                 layers: list[int] | None = None, seed: int = 0):
        if variant not in self.VARIANTS:
            raise GradrecError(f"unknown variant {variant!r}")
        if layers is None:
            if k % 2 != 0 and variant in ("mlp", "neumf"):
                raise GradrecError(f"embedding dim must be even for the MLP tower, got {k}")
            layers = [k, max(1, k // 2)]
        rng = np.random.default_rng(seed)
        self.variant = variant
        self.layers = list(layers)
        self.params: dict[str, Array] = {
            "gmf_user": base.init_normal(rng, n_users, k),
            "gmf_item": base.init_normal(rng, n_items, k),
            "gmf_out": base.init_normal(rng, k),
        }
        sizes = [2 * k] + self.layers
        for n, (d_in, d_out) in enumerate(zip(sizes, sizes[1:]), start=1):
            self.params[f"mlp_w{n}"] = base.init_layer(rng, d_in, d_in, d_out)
            self.params[f"mlp_b{n}"] = np.zeros(d_out)
        self.params["mlp_user"] = base.init_normal(rng, n_users, k)
        self.params["mlp_item"] = base.init_normal(rng, n_items, k)
        self.params["mlp_out_w"] = base.init_layer(rng, self.layers[-1], self.layers[-1])
        self.params["mlp_out_b"] = np.asarray(0.0)
        self.params["fusion_w"] = base.init_layer(rng, k + self.layers[-1],
                                                  k + self.layers[-1])
        self.params["fusion_b"] = np.asarray(0.0)
        self.trainable = tuple(self.params)

    @classmethod
    def from_params(cls, params: dict[str, Array], variant: str,
                    layers: list[int]) -> "NeuMf":
        model = cls.__new__(cls)
        model.variant = variant
        model.layers = list(layers)
        model.params = params
        model.trainable = tuple(params)
        return model

    def _mlp_tower(self, leaves, users: Array, items: Array) -> E.Node:
        x = E.concat([E.embedding_lookup(leaves["mlp_user"], users),
                      E.embedding_lookup(leaves["mlp_item"], items)], axis=1)
        for n in range(1, len(self.layers) + 1):
            x = base.affine(x, leaves[f"mlp_w{n}"], leaves[f"mlp_b{n}"]).relu()
        return x

    def logits(self, leaves, users: Array, items: Array, variant: str | None = None) -> E.Node:
        variant = variant or self.variant
        if variant == "gmf":
            prod = (E.embedding_lookup(leaves["gmf_user"], users)
                    * E.embedding_lookup(leaves["gmf_item"], items))
            return E.matmul(prod, leaves["gmf_out"])
        if variant == "mlp":
            hidden = self._mlp_tower(leaves, users, items)
            return E.matmul(hidden, leaves["mlp_out_w"]) + leaves["mlp_out_b"]
        prod = (E.embedding_lookup(leaves["gmf_user"], users)
                * E.embedding_lookup(leaves["gmf_item"], items))
        hidden = self._mlp_tower(leaves, users, items)
        fused = E.concat([prod, hidden], axis=1)
        return E.matmul(fused, leaves["fusion_w"]) + leaves["fusion_b"]

    def build_loss(self, leaves, users: Array, items: Array, labels: Array) -> E.Node:
        return base.bce_from_logits(self.logits(leaves, users, items), labels)

    def fit(self, table: InteractionTable, optimizer, epochs: int, batch_size: int,
            seed: int, neg_per_pos: int = 4) -> list[float]:
        users, items, _ = base.interactions_as_arrays(table)
        if users.size == 0:
            raise GradrecError("empty training set")
        sampler = base.NegativeSampler(table)
        rng = np.random.default_rng(seed)
        trace = []
        for epoch in range(epochs):
            negs = sampler.draw_many(users, neg_per_pos, rng)
            all_users = np.concatenate([users, np.repeat(users, neg_per_pos)])
            all_items = np.concatenate([items, negs.ravel()])
            all_labels = np.concatenate([np.ones(users.size),
                                         np.zeros(users.size * neg_per_pos)])
            total, seen = 0.0, 0
            for idx in base.minibatches(all_users.size, batch_size, rng):
                value = base.gradient_step(
                    self.params, self.trainable,
                    lambda lv: self.build_loss(lv, all_users[idx], all_items[idx],
                                               all_labels[idx]),
                    optimizer, epoch)
                total += value * idx.size
                seen += idx.size
            trace.append(total / seen)
        return trace

    def raw_score(self, user: int, item: int, variant: str | None = None) -> float:
        leaves = {n: E.const(v) for n, v in self.params.items()}
        node = self.logits(leaves, np.array([user]), np.array([item]), variant)
        return float(node.value[0])

    def score(self, user: int, item: int) -> float:
        z = self.raw_score(user, item)
        return float(np.exp(-np.logaddexp(0.0, -z)))


class Cdae:
    """Denoising autoencoder over a user's preference vector with a
    per-user input node; trained on observed positives plus sampled
    negatives from the corrupted input."""

    trainable = ("encoder_w", "user_embed", "hidden_bias", "decoder_w", "decoder_bias")

    def __init__(self, n_users: int, n_items: int, hidden: int, corruption: float = 0.5,
                 seed: int = 0):
        if not 0.0 <= corruption < 1.0:
            raise GradrecError(f"corruption probability must be in [0, 1), got {corruption}")
        rng = np.random.default_rng(seed)
        self.corruption = corruption
        self.params: dict[str, Array] = {
            "encoder_w": base.init_normal(rng, n_items, hidden),
            "user_embed": base.init_normal(rng, n_users, hidden),
            "hidden_bias": np.zeros(hidden),
            "decoder_w": base.init_normal(rng, n_items, hidden),  # row per item
            "decoder_bias": np.zeros(n_items),
        }
        self._train_vectors: dict[int, Array] = {}
        self._score_cache: dict[int, Array] = {}

    @classmethod
    def from_params(cls, params: dict[str, Array], corruption: float = 0.5) -> "Cdae":
        model = cls.__new__(cls)
        model.corruption = corruption
        model.params = params
        model._train_vectors = {}
        model._score_cache = {}
        return model

    @property
    def n_items(self) -> int:
        return self.params["decoder_bias"].shape[0]

    def hidden(self, user: int, preference: Array) -> Array:
        p = self.params
        pre = preference @ p["encoder_w"] + p["user_embed"][user] + p["hidden_bias"]
        return 1.0 / (1.0 + np.exp(-pre))

    def forward(self, user: int, preference: Array) -> Array:
        """Per-item probabilities from a (possibly corrupted) preference vector."""
        if preference.shape != (self.n_items,):
            raise GradrecError(f"preference vector must have length {self.n_items}, "
                               f"got {preference.shape}")
        z = self.hidden(user, preference)
        logits = self.params["decoder_w"] @ z + self.params["decoder_bias"]
        return 1.0 / (1.0 + np.exp(-logits))

    def build_loss(self, leaves, user: int, corrupted: Array, target_items: Array,
                   labels: Array) -> E.Node:
        z = (E.matmul(E.const(corrupted), leaves["encoder_w"])
             + E.embedding_lookup(leaves["user_embed"], [user]).reshape(
                 (leaves["hidden_bias"].value.shape[0],))
             + leaves["hidden_bias"]).sigmoid()
        logits = (E.matmul(E.embedding_lookup(leaves["decoder_w"], target_items), z)
                  + E.embedding_lookup(leaves["decoder_bias"], target_items))
        return base.bce_from_logits(logits, labels)

    def fit(self, table: InteractionTable, optimizer, epochs: int, seed: int,
            neg_per_pos: int = 4) -> list[float]:
        by_user = table.consumed()
        if not by_user:
            raise GradrecError("empty training set")
        self._train_vectors = {}
        for user, items in by_user.items():
            vec = np.zeros(self.n_items)
            vec[sorted(items)] = 1.0
            self._train_vectors[user] = vec
        sampler = base.NegativeSampler(table)
        rng = np.random.default_rng(seed)
        users = np.array(sorted(by_user))
        trace = []
        for epoch in range(epochs):
            total, seen = 0.0, 0
            for user in users[rng.permutation(users.size)]:
                user = int(user)
                observed = np.array(sorted(by_user[user]), dtype=np.int64)
                vec = self._train_vectors[user].copy()
                if self.corruption > 0.0:
                    dropped = rng.random(observed.size) < self.corruption
                    vec[observed[dropped]] = 0.0
                    vec[observed[~dropped]] = 1.0 / (1.0 - self.corruption)
                negatives = sampler.draw(user, neg_per_pos * observed.size, rng)
                targets = np.concatenate([observed, negatives])
                labels = np.concatenate([np.ones(observed.size), np.zeros(negatives.size)])
                value = base.gradient_step(
                    self.params, self.trainable,
                    lambda lv: self.build_loss(lv, user, vec, targets, labels),
                    optimizer, epoch)
                total += value
                seen += 1
            trace.append(total / seen)
        self._score_cache = {}
        return trace

    def score(self, user: int, item: int) -> float:
        cached = self._score_cache.get(user)
        if cached is None:
            vec = self._train_vectors.get(user)
            if vec is None:
                vec = np.zeros(self.n_items)
            cached = self.forward(user, vec)
            self._score_cache[user] = cached
        return float(cached[item])

    def load_train_vectors(self, table: InteractionTable) -> None:
        """Rebuild the per-user input vectors when restoring from a checkpoint."""
        self._train_vectors = {}
        for user, items in table.consumed().items():
            vec = np.zeros(self.n_items)
            vec[sorted(items)] = 1.0
            self._train_vectors[user] = vec
        self._score_cache = {}

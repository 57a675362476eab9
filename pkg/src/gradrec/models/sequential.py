"""Sequence-aware models: first-order metric embedding (PRME), a
convolutional sequence model (Caser), and self-attention over the recent
window blended with a long-term metric term (AttRec).

PRME and AttRec produce distances (lower is better); their ``score``
methods negate so every model ranks by descending score. Padding rows of
the item embedding tables are pinned to zero after every optimizer step.
"""

from __future__ import annotations

import numpy as np

from gradrec import engine as E
from gradrec.data import SequenceDataset, SequenceInstance
from gradrec.errors import GradrecError
from gradrec.models import base

Array = np.ndarray


def _sampler_for(sequences: SequenceDataset) -> base.NegativeSampler:
    consumed = {user: set(items) for user, items in sequences.histories.items()}
    return base.NegativeSampler(n_items=sequences.n_items, consumed=consumed,
                                n_users=sequences.n_users)


def _epoch_mean(values: list[float]) -> float:
    return float(np.mean(values))


class Prme:
    """Blend of a user-preference distance and a first-order sequential
    distance; trained with a BPR-style pairwise loss on next items."""

    trainable = ("user_embed", "pref_item", "seq_item")

    def __init__(self, n_users: int, n_items: int, k: int, alpha: float = 0.5,
                 margin: float = 0.0, l2: float = 0.0, seed: int = 0):
        if not 0.0 <= alpha <= 1.0:
            raise GradrecError(f"alpha must be in [0, 1], got {alpha}")
        rng = np.random.default_rng(seed)
        self.alpha = alpha
        self.margin = margin  # stored for config echo; the log-sigmoid loss has no margin
        self.l2 = l2
        self.params: dict[str, Array] = {
            "user_embed": base.init_normal(rng, n_users, k),
            "pref_item": base.init_normal(rng, n_items, k),
            "seq_item": base.init_normal(rng, n_items, k),
        }
        self.last_item: dict[int, int] = {}

    @classmethod
    def from_params(cls, params: dict[str, Array], alpha: float, margin: float = 0.0,
                    l2: float = 0.0) -> "Prme":
        model = cls.__new__(cls)
        model.alpha = alpha
        model.margin = margin
        model.l2 = l2
        model.params = params
        model.last_item = {}
        return model

    def distance(self, user: int, prev_item: int, item: int) -> float:
        p = self.params
        du = p["user_embed"][user] - p["pref_item"][item]
        ds = p["seq_item"][prev_item] - p["seq_item"][item]
        return float(self.alpha * (du @ du) + (1.0 - self.alpha) * (ds @ ds))

    def build_loss(self, leaves, users: Array, prevs: Array, pos: Array,
                   neg: Array) -> E.Node:
        a = self.alpha
        uu = E.embedding_lookup(leaves["user_embed"], users)
        sp = E.embedding_lookup(leaves["seq_item"], prevs)

        def dist(items):
            d_pref = E.sq_l2_dist(uu, E.embedding_lookup(leaves["pref_item"], items))
            d_seq = E.sq_l2_dist(sp, E.embedding_lookup(leaves["seq_item"], items))
            return a * d_pref + (1.0 - a) * d_seq

        data = (dist(pos) - dist(neg)).softplus()  # -ln sigma(d_neg - d_pos)
        if self.l2:
            # regularize each table in proportion to its use so alpha=0/1
            # leaves the unused tables untouched
            pref_rows = (base.row_sq_norm(uu)
                         + base.row_sq_norm(E.embedding_lookup(leaves["pref_item"], pos))
                         + base.row_sq_norm(E.embedding_lookup(leaves["pref_item"], neg)))
            seq_rows = (base.row_sq_norm(sp)
                        + base.row_sq_norm(E.embedding_lookup(leaves["seq_item"], pos))
                        + base.row_sq_norm(E.embedding_lookup(leaves["seq_item"], neg)))
            data = data + self.l2 * (a * pref_rows + (1.0 - a) * seq_rows)
        return data.mean()

    def fit(self, sequences: SequenceDataset, optimizer, epochs: int, batch_size: int,
            seed: int, on_step=None) -> list[float]:
        if sequences.window != 1 or sequences.horizon != 1:
            raise GradrecError("PRME is first-order: build sequences with L=1, T=1")
        inst = [x for x in sequences.instances if x.window[0] != sequences.padding_id]
        if not inst:
            raise GradrecError("no trainable transitions in the sequence data")
        users = np.array([x.user for x in inst])
        prevs = np.array([x.window[0] for x in inst])
        pos = np.array([x.targets[0] for x in inst])
        sampler = _sampler_for(sequences)
        rng = np.random.default_rng(seed)
        trace = []
        for epoch in range(epochs):
            losses = []
            for idx in base.minibatches(users.size, batch_size, rng):
                neg = sampler.draw_many(users[idx], 1, rng).ravel()
                value = base.gradient_step(
                    self.params, self.trainable,
                    lambda lv: self.build_loss(lv, users[idx], prevs[idx], pos[idx], neg),
                    optimizer, epoch)
                if on_step is not None:
                    on_step(self.params)
                losses += [value] * idx.size
            trace.append(_epoch_mean(losses))
        self.last_item = {u: h[-1] for u, h in sequences.histories.items() if h}
        return trace

    def score(self, user: int, item: int) -> float:
        prev = self.last_item.get(user)
        if prev is None:
            raise GradrecError(f"no history recorded for user {user}")
        return -self.distance(user, prev, item)


class Caser:
    """Horizontal (per-height, max-pooled) and vertical convolutions over
    the embedded window, a fully-connected bottleneck, and a wide output
    layer over concat(sequence vector, user embedding)."""

    def __init__(self, n_users: int, n_items: int, d: int, window: int,
                 n_h: int = 4, n_v: int = 2, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.window = window
        self.n_h = n_h
        self.n_v = n_v
        self.padding_id = n_items
        self.params: dict[str, Array] = {
            "item_embed": base.init_normal(rng, n_items + 1, d),
        }
        self.params["item_embed"][n_items] = 0.0
        for h in range(1, window + 1):
            self.params[f"h_filters_{h}"] = base.init_normal(rng, n_h, h, d)
            self.params[f"h_bias_{h}"] = np.zeros(n_h)
        self.params["v_filters"] = base.init_normal(rng, n_v, window)
        concat_dim = n_h * window + n_v * d
        self.params["fc_w"] = base.init_normal(rng, d, concat_dim)
        self.params["fc_b"] = np.zeros(d)
        self.params["user_embed"] = base.init_normal(rng, n_users, d)
        self.params["out_w"] = base.init_normal(rng, n_items, 2 * d)
        self.params["out_b"] = np.zeros(n_items)
        self.trainable = tuple(self.params)
        self.serve_windows: dict[int, tuple[int, ...]] = {}
        self._score_cache: dict[int, Array] = {}

    @classmethod
    def from_params(cls, params: dict[str, Array], window: int, n_h: int,
                    n_v: int) -> "Caser":
        model = cls.__new__(cls)
        model.window = window
        model.n_h = n_h
        model.n_v = n_v
        model.padding_id = params["item_embed"].shape[0] - 1
        model.params = params
        model.trainable = tuple(params)
        model.serve_windows = {}
        model._score_cache = {}
        return model

    @property
    def n_items(self) -> int:
        return self.params["out_b"].shape[0]

    def _sequence_vector(self, leaves, window) -> E.Node:
        if len(window) != self.window:
            raise GradrecError(f"window must have length {self.window}, got {len(window)}")
        ew = E.embedding_lookup(leaves["item_embed"], np.asarray(window))  # (L, d)
        pooled = []
        for h in range(1, self.window + 1):
            conv = E.conv_h(ew, leaves[f"h_filters_{h}"], leaves[f"h_bias_{h}"])
            pooled.append(E.max_over_time(conv.relu()))  # (n_h,)
        vert = E.matmul(leaves["v_filters"], ew)  # (n_v, d)
        flat = vert.reshape((self.n_v * ew.value.shape[1],))
        cat = E.concat(pooled + [flat])
        return (E.matmul(leaves["fc_w"], cat) + leaves["fc_b"]).relu()

    def item_logits(self, leaves, user: int, window, items: Array) -> E.Node:
        z = self._sequence_vector(leaves, window)
        pu = E.embedding_lookup(leaves["user_embed"], [user])
        zu = E.concat([z, pu.reshape((pu.value.shape[1],))])
        rows = E.embedding_lookup(leaves["out_w"], items)
        return E.matmul(rows, zu) + E.embedding_lookup(leaves["out_b"], items)

    def build_loss(self, leaves, batch: list[tuple[SequenceInstance, Array]]) -> E.Node:
        """batch pairs each instance with its sampled negatives; BCE is
        averaged over all (positive + negative) examples in the batch."""
        parts = []
        count = 0
        for inst, negatives in batch:
            items = np.concatenate([np.asarray(inst.targets), negatives])
            labels = np.concatenate([np.ones(len(inst.targets)), np.zeros(negatives.size)])
            logits = self.item_logits(leaves, inst.user, inst.window, items)
            parts.append((logits.softplus() - E.const(labels) * logits).sum())
            count += items.size
        total = parts[0]
        for p in parts[1:]:
            total = total + p
        return total * (1.0 / count)

    def fit(self, sequences: SequenceDataset, optimizer, epochs: int, batch_size: int,
            seed: int, neg_per_target: int = 3, on_step=None) -> list[float]:
        if sequences.window != self.window:
            raise GradrecError(f"sequence window {sequences.window} != model window {self.window}")
        inst = sequences.instances
        if not inst:
            raise GradrecError("no training instances")
        sampler = _sampler_for(sequences)
        rng = np.random.default_rng(seed)
        trace = []
        for epoch in range(epochs):
            losses = []
            for idx in base.minibatches(len(inst), batch_size, rng):
                batch = []
                for i in idx:
                    x = inst[i]
                    negs = sampler.draw(x.user, neg_per_target * len(x.targets), rng)
                    batch.append((x, negs))
                value = base.gradient_step(self.params, self.trainable,
                                           lambda lv: self.build_loss(lv, batch),
                                           optimizer, epoch)
                self.params["item_embed"][self.padding_id] = 0.0
                if on_step is not None:
                    on_step(self.params)
                losses += [value] * idx.size
            trace.append(_epoch_mean(losses))
        self.serve_windows = {u: sequences.latest_window(u) for u in sequences.histories}
        self._score_cache = {}
        return trace

    def scores_for_window(self, user: int, window) -> Array:
        """Numpy serving path over the full catalog."""
        if len(window) != self.window:
            raise GradrecError(f"window must have length {self.window}, got {len(window)}")
        p = self.params
        ew = p["item_embed"][np.asarray(window)]
        pooled = []
        for h in range(1, self.window + 1):
            windows = np.lib.stride_tricks.sliding_window_view(ew, (h, ew.shape[1]))[:, 0]
            conv = np.einsum("thd,fhd->tf", windows, p[f"h_filters_{h}"]) + p[f"h_bias_{h}"]
            pooled.append(np.maximum(conv, 0.0).max(axis=0))
        vert = (p["v_filters"] @ ew).ravel()
        cat = np.concatenate(pooled + [vert])
        z = np.maximum(p["fc_w"] @ cat + p["fc_b"], 0.0)
        zu = np.concatenate([z, p["user_embed"][user]])
        return p["out_w"] @ zu + p["out_b"]

    def score(self, user: int, item: int) -> float:
        window = self.serve_windows.get(user)
        if window is None:
            raise GradrecError(f"no history recorded for user {user}")
        scores = self._score_cache.get(user)
        if scores is None:
            scores = self._score_cache[user] = self.scores_for_window(user, window)
        return float(scores[item])


class AttRec:
    """Self-attention over the embedded window for short-term intent,
    blended with a long-term user/item metric distance; hinge-trained,
    with rows clipped to a norm ball after every step."""

    def __init__(self, n_users: int, n_items: int, d: int, window: int,
                 k_lt: int | None = None, omega: float = 0.5, margin: float = 0.5,
                 clip_rho: float = 1.0, seed: int = 0):
        if not 0.0 <= omega <= 1.0:
            raise GradrecError(f"omega must be in [0, 1], got {omega}")
        rng = np.random.default_rng(seed)
        k_lt = k_lt if k_lt is not None else d
        self.window = window
        self.omega = omega
        self.margin = margin
        self.clip_rho = clip_rho
        self.padding_id = n_items
        self.d = d
        self.params: dict[str, Array] = {
            "att_item": base.init_normal(rng, n_items + 1, d),
            "w_query": base.init_normal(rng, d, d),
            "w_key": base.init_normal(rng, d, d),
            "lt_user": base.init_normal(rng, n_users, k_lt),
            "lt_item": base.init_normal(rng, n_items, k_lt),
        }
        self.params["att_item"][n_items] = 0.0
        self.trainable = tuple(self.params)
        self.serve_windows: dict[int, tuple[int, ...]] = {}
        self._dist_cache: dict[int, Array] = {}

    @classmethod
    def from_params(cls, params: dict[str, Array], window: int, omega: float,
                    margin: float, clip_rho: float) -> "AttRec":
        model = cls.__new__(cls)
        model.window = window
        model.omega = omega
        model.margin = margin
        model.clip_rho = clip_rho
        model.padding_id = params["att_item"].shape[0] - 1
        model.d = params["att_item"].shape[1]
        model.params = params
        model.trainable = tuple(params)
        model.serve_windows = {}
        model._dist_cache = {}
        return model

    @property
    def n_items(self) -> int:
        return self.params["lt_item"].shape[0]

    def _intent(self, leaves, window) -> E.Node:
        """Mean of the attention-weighted window embeddings, shape (d,)."""
        if len(window) != self.window:
            raise GradrecError(f"window must have length {self.window}, got {len(window)}")
        ew = E.embedding_lookup(leaves["att_item"], np.asarray(window))  # (L, d)
        q = E.matmul(ew, leaves["w_query"]).relu()
        k = E.matmul(ew, leaves["w_key"]).relu()
        attn = E.softmax_rows(E.matmul(q, k.T) * (1.0 / np.sqrt(self.d)))
        return E.matmul(attn, ew).mean(axis=0)

    def score_node(self, leaves, user: int, window, item: int) -> E.Node:
        """Blended squared-distance score; lower means better."""
        intent = self._intent(leaves, window)
        d = self.d
        k_lt = leaves["lt_user"].value.shape[1]
        uu = E.embedding_lookup(leaves["lt_user"], [user]).reshape((k_lt,))
        vi = E.embedding_lookup(leaves["lt_item"], [item]).reshape((k_lt,))
        xi = E.embedding_lookup(leaves["att_item"], [item]).reshape((d,))
        return (self.omega * E.sq_l2_dist(uu, vi)
                + (1.0 - self.omega) * E.sq_l2_dist(intent, xi))

    def build_loss(self, leaves, batch: list[tuple[SequenceInstance, int]]) -> E.Node:
        parts = []
        for inst, neg in batch:
            s_pos = self.score_node(leaves, inst.user, inst.window, inst.targets[0])
            s_neg = self.score_node(leaves, inst.user, inst.window, neg)
            parts.append((self.margin + s_pos - s_neg).relu())
        total = parts[0]
        for p in parts[1:]:
            total = total + p
        return total * (1.0 / len(batch))

    def project(self) -> None:
        for name in ("att_item", "lt_user", "lt_item"):
            self.params[name] = base.clip_rows_to_ball(self.params[name], self.clip_rho)
        self.params["att_item"][self.padding_id] = 0.0

    def fit(self, sequences: SequenceDataset, optimizer, epochs: int, batch_size: int,
            seed: int, on_step=None) -> list[float]:
        if sequences.horizon != 1:
            raise GradrecError("AttRec trains on single next items: build sequences with T=1")
        if sequences.window != self.window:
            raise GradrecError(f"sequence window {sequences.window} != model window {self.window}")
        inst = sequences.instances
        if not inst:
            raise GradrecError("no training instances")
        sampler = _sampler_for(sequences)
        rng = np.random.default_rng(seed)
        trace = []
        for epoch in range(epochs):
            losses = []
            for idx in base.minibatches(len(inst), batch_size, rng):
                batch = [(inst[i], int(sampler.draw(inst[i].user, 1, rng)[0])) for i in idx]
                value = base.gradient_step(self.params, self.trainable,
                                           lambda lv: self.build_loss(lv, batch),
                                           optimizer, epoch)
                self.project()
                if on_step is not None:
                    on_step(self.params)
                losses += [value] * idx.size
            trace.append(_epoch_mean(losses))
        self.serve_windows = {u: sequences.latest_window(u) for u in sequences.histories}
        self._dist_cache = {}
        return trace

    def intent_vector(self, window) -> Array:
        p = self.params
        ew = p["att_item"][np.asarray(window)]
        q = np.maximum(ew @ p["w_query"], 0.0)
        k = np.maximum(ew @ p["w_key"], 0.0)
        logits = (q @ k.T) / np.sqrt(self.d)
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        attn = e / e.sum(axis=1, keepdims=True)
        return (attn @ ew).mean(axis=0)

    def distances_for_window(self, user: int, window) -> Array:
        p = self.params
        intent = self.intent_vector(window)
        d_lt = ((p["lt_user"][user] - p["lt_item"]) ** 2).sum(axis=1)
        d_st = ((intent - p["att_item"][:self.n_items]) ** 2).sum(axis=1)
        return self.omega * d_lt + (1.0 - self.omega) * d_st

    def score(self, user: int, item: int) -> float:
        window = self.serve_windows.get(user)
        if window is None:
            raise GradrecError(f"no history recorded for user {user}")
        dists = self._dist_cache.get(user)
        if dists is None:
            dists = self._dist_cache[user] = self.distances_for_window(user, window)
        return -float(dists[item])

import numpy as np
import pytest

from gradrec import data, engine as E, metrics, synthetic
from gradrec.errors import GradrecError
from gradrec.models.baselines import PopularityRanker
from gradrec.models.sequential import AttRec, Caser, Prme


def markov_split(window, horizon=1, **gen_kw):
    table = synthetic.markov_chains(**gen_kw)
    train, test = data.split(table, data.LeaveOneOut())
    sequences = data.build_sequences(train, window, horizon)
    return table, train, test, sequences


class TestPrmeDistance:
    def test_pure_preference_distance(self):
        model = Prme(2, 3, k=2, alpha=1.0)
        model.params["user_embed"][0] = [0.0, 0.0]
        model.params["pref_item"][1] = [3.0, 4.0]
        assert model.distance(0, prev_item=2, item=1) == pytest.approx(25.0)

    def test_alpha_zero_ignores_user(self):
        model = Prme(2, 3, k=2, alpha=0.0, seed=1)
        before = model.distance(0, 1, 2)
        model.params["user_embed"][0] += 17.0
        assert model.distance(0, 1, 2) == pytest.approx(before)

    def test_convex_blend(self):
        model = Prme(1, 3, k=2, alpha=0.5)
        model.params["user_embed"][0] = [0.0, 0.0]
        model.params["pref_item"][2] = [3.0, 4.0]  # d^2 = 25
        model.params["seq_item"][1] = [0.0, 0.0]
        model.params["seq_item"][2] = [1.0, 0.0]  # d^2 = 1
        assert model.distance(0, prev_item=1, item=2) == pytest.approx(13.0)

    def test_scores_are_nonneg_distances(self):
        model = Prme(3, 4, k=3, alpha=0.3, seed=2)
        for prev in range(4):
            for item in range(4):
                assert model.distance(0, prev, item) >= 0.0


class TestPrmeFit:
    def test_gradient_check(self):
        model = Prme(3, 5, k=3, alpha=0.4, l2=0.02, seed=3)
        rng = np.random.default_rng(5)
        for name in model.params:
            model.params[name] = rng.normal(scale=0.5, size=model.params[name].shape)
        users = np.array([0, 1, 2])
        prevs = np.array([0, 1, 2])
        pos = np.array([1, 2, 3])
        neg = np.array([4, 0, 4])
        result = E.grad_check(lambda lv: model.build_loss(lv, users, prevs, pos, neg),
                              {n: model.params[n] for n in model.trainable})
        assert result.max_rel_err < 1e-4

    def test_learns_planted_transitions(self):
        table, train, test, sequences = markov_split(window=1, n_users=60, n_items=15,
                                                     history=8, seed=2)
        model = Prme(table.n_users, table.n_items, k=8, alpha=0.2, l2=0.0, seed=1)
        model.fit(sequences, E.Adam(lr=0.05), epochs=30, batch_size=64, seed=2)
        report = metrics.evaluate_ranking(model.score, train, test,
                                          metrics.FullRanking(), [1])
        assert report.values["recall@1"] >= 0.9  # HR@1 on single held-out items

    def test_alpha_boundaries_freeze_unused_tables(self):
        _, _, _, sequences = markov_split(window=1, n_users=10, n_items=6,
                                          history=8, seed=4)
        for alpha, frozen in ((0.0, ("user_embed", "pref_item")), (1.0, ("seq_item",))):
            model = Prme(10, 6, k=4, alpha=alpha, l2=0.01, seed=5)
            before = {n: model.params[n].copy() for n in frozen}
            model.fit(sequences, E.Adam(lr=0.05), epochs=2, batch_size=16, seed=6)
            for name in frozen:
                assert np.array_equal(model.params[name], before[name]), (alpha, name)

    def test_requires_first_order_sequences(self):
        table = synthetic.markov_chains(n_users=5, n_items=5, history=6, seed=1)
        sequences = data.build_sequences(table, window=2, horizon=1)
        model = Prme(table.n_users, table.n_items, k=2)
        with pytest.raises(GradrecError):
            model.fit(sequences, E.Sgd(lr=0.1), epochs=1, batch_size=8, seed=0)

    def test_bitwise_reproducible(self):
        _, _, _, sequences = markov_split(window=1, n_users=12, n_items=6,
                                          history=10, seed=7)

        def run():
            model = Prme(12, 6, k=4, alpha=0.5, seed=8)
            return model.fit(sequences, E.Adam(lr=0.02), epochs=4, batch_size=32, seed=9)

        assert run() == run()


class TestCaserForward:
    def test_conv_signal_length(self):
        model = Caser(2, 6, d=3, window=5, n_h=2, n_v=1, seed=0)
        leaves = {n: E.const(v) for n, v in model.params.items()}
        ew = E.embedding_lookup(leaves["item_embed"], np.array([0, 1, 2, 3, 4]))
        conv = E.conv_h(ew, leaves["h_filters_2"], leaves["h_bias_2"])
        assert conv.value.shape == (4, 2)  # L - h + 1 = 4 positions

    def test_vertical_branch_width(self):
        d, n_v = 8, 3
        model = Caser(2, 6, d=d, window=4, n_h=1, n_v=n_v, seed=1)
        assert model.params["fc_w"].shape[1] == 1 * 4 + n_v * d

    def test_all_padding_window_scores_equal(self):
        model = Caser(2, 5, d=4, window=3, n_h=2, n_v=1, seed=2)
        model.params["user_embed"][:] = 0.0
        model.params["fc_b"][:] = 0.0
        model.params["out_b"][:] = 0.0
        for h in range(1, 4):
            model.params[f"h_bias_{h}"][:] = 0.0
        window = (model.padding_id,) * 3
        scores = model.scores_for_window(0, window)
        assert np.allclose(scores, scores[0])

    def test_wrong_window_length_rejected(self):
        model = Caser(2, 5, d=4, window=3, seed=3)
        with pytest.raises(GradrecError):
            model.scores_for_window(0, (0, 1))
        leaves = {n: E.const(v) for n, v in model.params.items()}
        with pytest.raises(GradrecError):
            model.item_logits(leaves, 0, (0, 1), np.array([0]))


class TestCaserFit:
    def test_gradient_check(self):
        model = Caser(3, 6, d=4, window=3, n_h=1, n_v=1, seed=4)
        rng = np.random.default_rng(6)
        for name in model.params:
            model.params[name] = rng.normal(scale=0.4, size=model.params[name].shape)
        model.params["item_embed"][model.padding_id] = 0.0
        ds = data.build_sequences(
            synthetic.markov_chains(n_users=2, n_items=6, history=5, seed=3), 3, 1)
        batch = [(ds.instances[0], np.array([4, 5])), (ds.instances[3], np.array([0, 2]))]
        result = E.grad_check(lambda lv: model.build_loss(lv, batch),
                              {n: model.params[n] for n in model.trainable})
        assert result.max_rel_err < 1e-4

    def test_learns_planted_transitions(self):
        table, train, test, sequences = markov_split(window=5, n_users=60, n_items=15,
                                                     history=8, seed=6)
        model = Caser(table.n_users, table.n_items, d=8, window=5, n_h=2, n_v=1, seed=7)
        model.fit(sequences, E.Adam(lr=0.05), epochs=12, batch_size=16, seed=8,
                  neg_per_target=3)
        report = metrics.evaluate_ranking(model.score, train, test,
                                          metrics.FullRanking(), [1])
        assert report.values["recall@1"] >= 0.9

    def test_padding_row_stays_zero(self):
        _, _, _, sequences = markov_split(window=3, n_users=15, n_items=6,
                                          history=10, seed=9)
        model = Caser(15, 6, d=4, window=3, n_h=1, n_v=1, seed=10)
        steps = 0

        def watch(params):
            nonlocal steps
            steps += 1
            assert np.array_equal(params["item_embed"][model.padding_id], np.zeros(4))

        model.fit(sequences, E.Adam(lr=0.05), epochs=15, batch_size=8, seed=11,
                  on_step=watch)
        assert steps >= 100


class TestAttRecScore:
    def test_attention_rows_sum_to_one(self):
        model = AttRec(2, 6, d=4, window=3, seed=0)
        rng = np.random.default_rng(1)
        model.params["att_item"] = rng.normal(size=model.params["att_item"].shape)
        leaves = {n: E.const(v) for n, v in model.params.items()}
        ew = E.embedding_lookup(leaves["att_item"], np.array([0, 1, 2]))
        q = E.matmul(ew, leaves["w_query"]).relu()
        k = E.matmul(ew, leaves["w_key"]).relu()
        attn = E.softmax_rows(E.matmul(q, k.T) * (1.0 / 2.0))
        np.testing.assert_allclose(attn.value.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(attn.value >= 0.0)

    def test_omega_one_ignores_window(self):
        model = AttRec(2, 6, d=4, window=3, omega=1.0, seed=2)
        model.serve_windows = {0: (0, 1, 2)}
        base = model.score(0, 3)
        model.serve_windows = {0: (4, 5, 0)}
        model._dist_cache = {}
        assert model.score(0, 3) == pytest.approx(base)

    def test_single_token_window_intent_is_embedding(self):
        model = AttRec(2, 6, d=4, window=1, seed=3)
        rng = np.random.default_rng(4)
        model.params["att_item"] = rng.normal(size=model.params["att_item"].shape)
        intent = model.intent_vector((2,))
        np.testing.assert_allclose(intent, model.params["att_item"][2], atol=1e-12)

    def test_scores_are_negated_distances(self):
        model = AttRec(2, 6, d=4, window=2, seed=5)
        model.serve_windows = {0: (1, 2)}
        dists = model.distances_for_window(0, (1, 2))
        assert np.all(dists >= 0.0)
        assert model.score(0, 3) == pytest.approx(-dists[3])


class TestAttRecFit:
    def test_hinge_example(self):
        # gamma=0.5, s_pos=0.2, s_neg=1.0 -> max(0, 0.5 + 0.2 - 1.0) = 0
        assert max(0.0, 0.5 + 0.2 - 1.0) == 0.0
        node = (0.5 + E.const(0.2) - E.const(1.0)).relu()
        assert float(node.value) == 0.0

    def test_gradient_check_away_from_kinks(self):
        model = AttRec(3, 6, d=4, window=2, omega=0.4, margin=2.0, seed=6)
        rng = np.random.default_rng(7)
        for name in model.params:
            model.params[name] = rng.normal(scale=0.6, size=model.params[name].shape)
        model.params["att_item"][model.padding_id] = 0.0
        ds = data.build_sequences(
            synthetic.markov_chains(n_users=3, n_items=6, history=5, seed=5), 2, 1)
        # windows without the padding id: its all-zero row would pin the
        # relu projections exactly onto their kink
        clean = [x for x in ds.instances if model.padding_id not in x.window]
        batch = [(clean[0], 4), (clean[3], 5)]
        # confirm hinges and relu pre-activations sit away from the kinks
        leaves = {n: E.const(v) for n, v in model.params.items()}
        for inst, neg in batch:
            ew = model.params["att_item"][np.asarray(inst.window)]
            pre = np.concatenate([(ew @ model.params["w_query"]).ravel(),
                                  (ew @ model.params["w_key"]).ravel()])
            assert np.abs(pre).min() > 1e-3
            arg = (model.margin
                   + model.score_node(leaves, inst.user, inst.window, inst.targets[0]).value
                   - model.score_node(leaves, inst.user, inst.window, neg).value)
            assert abs(float(arg)) > 1e-3
        result = E.grad_check(lambda lv: model.build_loss(lv, batch),
                              {n: model.params[n] for n in model.trainable})
        assert result.max_rel_err < 1e-4

    def test_beats_popularity_by_half_again(self):
        table, train, test, sequences = markov_split(window=3, n_users=60, n_items=20,
                                                     history=8, seed=8)
        model = AttRec(table.n_users, table.n_items, d=8, window=3, omega=0.3,
                       margin=0.5, clip_rho=1.5, seed=9)
        model.fit(sequences, E.Adam(lr=0.05), epochs=15, batch_size=16, seed=10)
        got = metrics.evaluate_ranking(model.score, train, test,
                                       metrics.FullRanking(), [5])
        pop = PopularityRanker(train)
        base = metrics.evaluate_ranking(pop.score, train, test,
                                        metrics.FullRanking(), [5])
        assert got.values["recall@5"] >= 1.5 * base.values["recall@5"]

    def test_norms_clipped_and_padding_zero_every_step(self):
        _, _, _, sequences = markov_split(window=2, n_users=12, n_items=6,
                                          history=8, seed=11)
        rho = 0.8
        model = AttRec(12, 6, d=4, window=2, clip_rho=rho, seed=12)
        checks = 0

        def watch(params):
            nonlocal checks
            checks += 1
            for name in ("att_item", "lt_user", "lt_item"):
                assert np.linalg.norm(params[name], axis=1).max() <= rho + 1e-12
            assert np.array_equal(params["att_item"][model.padding_id], np.zeros(4))

        model.fit(sequences, E.Adam(lr=0.1), epochs=3, batch_size=8, seed=13,
                  on_step=watch)
        assert checks > 0

    def test_bitwise_reproducible(self):
        _, _, _, sequences = markov_split(window=2, n_users=10, n_items=6,
                                          history=8, seed=14)

        def run():
            model = AttRec(10, 6, d=4, window=2, seed=15)
            return model.fit(sequences, E.Adam(lr=0.03), epochs=3, batch_size=8, seed=16)

        assert run() == run()

import pytest

from gradrec import config as cfgmod
from gradrec.data import LeaveOneOut, RandomHoldout, Temporal
from gradrec.errors import ConfigError
from gradrec.metrics import FullRanking, SampledRanking


BASE = """\
[data]
path = ratings.txt
format = uirt
split = random:0.2
seed = 42

[model]
name = biasedsvd
k = 8

[train]
optimizer = adam
lr = 0.01
l2 = 0.001
epochs = 5
batch_size = 64
seed = 7
"""

RANKING = """\
[data]
path = ratings.txt
format = uirt
split = loo
seed = 42
binarize_threshold = 1.0

[model]
name = bprmf
k = 16

[train]
optimizer = adam
lr = 0.05
l2 = 0.0
epochs = 10
batch_size = 128
seed = 3

[eval]
cutoffs = 5,10
protocol = sampled:100
"""


class TestParseValid:
    def test_rating_config(self):
        cfg = cfgmod.parse_config(BASE)
        assert cfg.model.name == "biasedsvd"
        assert cfg.model.task == "rating"
        assert cfg.data.split == RandomHoldout(0.2, seed=42)
        assert cfg.eval is None
        assert cfg.train.lr == 0.01

    def test_ranking_config(self):
        cfg = cfgmod.parse_config(RANKING)
        assert isinstance(cfg.data.split, LeaveOneOut)
        assert cfg.eval.cutoffs == [5, 10]
        assert cfg.eval.protocol_obj(seed=9) == SampledRanking(m=100, seed=9)
        assert cfg.data.binarize_threshold == 1.0

    def test_temporal_split(self):
        cfg = cfgmod.parse_config(BASE.replace("random:0.2", "temporal:0.3"))
        assert cfg.data.split == Temporal(0.3)

    def test_full_protocol(self):
        cfg = cfgmod.parse_config(RANKING.replace("sampled:100", "full"))
        assert cfg.eval.protocol_obj(seed=1) == FullRanking()

    def test_neg_samples_default_per_model(self):
        cfg = cfgmod.parse_config(RANKING)
        assert cfgmod.neg_samples_for(cfg) == 1  # bprmf default
        cfg2 = cfgmod.parse_config(RANKING.replace("name = bprmf", "name = neumf"))
        assert cfgmod.neg_samples_for(cfg2) == 4

    def test_raw_text_is_echoed(self):
        cfg = cfgmod.parse_config(BASE)
        assert cfg.text == BASE


class TestValidationErrors:
    def test_unknown_model_key_rejected(self):
        bad = BASE.replace("k = 8", "k = 8\nmargin = 0.5")
        with pytest.raises(ConfigError) as err:
            cfgmod.parse_config(bad)
        assert any("margin" in issue for issue in err.value.issues)

    def test_typo_key_rejected(self):
        bad = BASE.replace("lr = 0.01", "lr = 0.01\nlearningrate = 0.5")
        with pytest.raises(ConfigError) as err:
            cfgmod.parse_config(bad)
        assert any("learningrate" in issue for issue in err.value.issues)

    def test_all_issues_reported_at_once(self):
        bad = (BASE.replace("k = 8", "k = 0")
                   .replace("optimizer = adam", "optimizer = adagrad")
                   .replace("split = random:0.2", "split = bogus"))
        with pytest.raises(ConfigError) as err:
            cfgmod.parse_config(bad)
        text = "\n".join(err.value.issues)
        assert "k must be >= 1" in text
        assert "adagrad" in text
        assert "bogus" in text

    def test_rating_model_with_eval_section_rejected(self):
        bad = BASE + "\n[eval]\ncutoffs = 5\nprotocol = full\n"
        with pytest.raises(ConfigError) as err:
            cfgmod.parse_config(bad)
        assert any("rmse/mae" in issue for issue in err.value.issues)

    def test_ranking_model_requires_eval(self):
        bad = RANKING.split("[eval]")[0]
        with pytest.raises(ConfigError) as err:
            cfgmod.parse_config(bad)
        assert any("cutoffs" in issue for issue in err.value.issues)

    def test_missing_seed_rejected(self):
        bad = BASE.replace("seed = 42\n", "")
        with pytest.raises(ConfigError) as err:
            cfgmod.parse_config(bad)
        assert any("[data] missing key 'seed'" in issue for issue in err.value.issues)

    def test_sequential_random_split_rejected(self):
        bad = RANKING.replace("name = bprmf\nk = 16",
                              "name = prme\nk = 16\nalpha = 0.5")
        bad = bad.replace("split = loo", "split = random:0.2")
        with pytest.raises(ConfigError) as err:
            cfgmod.parse_config(bad)
        assert any("chronology" in issue for issue in err.value.issues)

    def test_libfm_requires_fm(self):
        bad = BASE.replace("format = uirt", "format = libfm")
        with pytest.raises(ConfigError) as err:
            cfgmod.parse_config(bad)
        assert any("libfm" in issue for issue in err.value.issues)

    def test_prme_window_must_be_one(self):
        bad = RANKING.replace("name = bprmf\nk = 16",
                              "name = prme\nk = 16\nalpha = 0.5\nL = 3")
        with pytest.raises(ConfigError) as err:
            cfgmod.parse_config(bad)
        assert any("first-order" in issue for issue in err.value.issues)

    def test_required_model_keys_reported(self):
        bad = RANKING.replace("name = bprmf\nk = 16",
                              "name = attrec\nk = 16")
        with pytest.raises(ConfigError) as err:
            cfgmod.parse_config(bad)
        text = "\n".join(err.value.issues)
        for key in ("L", "omega", "margin", "clip_rho"):
            assert f"requires key '{key}'" in text

    def test_binarize_threshold_rejected_for_rating(self):
        bad = BASE.replace("seed = 42", "seed = 42\nbinarize_threshold = 4")
        with pytest.raises(ConfigError) as err:
            cfgmod.parse_config(bad)
        assert any("binarize_threshold" in issue for issue in err.value.issues)

import numpy as np
import pytest

from gradrec import data as datamod
from gradrec import synthetic


@pytest.fixture
def ratings_file(tmp_path):
    """Explicit 1-5 ratings, ~90 interactions, every user has >= 4."""
    table, _ = synthetic.planted_factor_ratings(10, 10, rank=2, density=0.85,
                                                mean=3.0, seed=13)
    # squash into the 1..5 range so clipping is meaningful
    squashed = [datamod.Interaction(x.user, x.item,
                                    float(np.clip(np.rint(x.rating), 1, 5)), x.timestamp)
                for x in table.interactions]
    path = tmp_path / "ratings.txt"
    datamod.write_uirt(path, table.with_interactions(squashed))
    return path


@pytest.fixture
def implicit_file(tmp_path):
    """Markov-structured implicit data usable by ranking and sequential models."""
    table = synthetic.markov_chains(n_users=25, n_items=12, history=7, seed=21)
    path = tmp_path / "implicit.txt"
    datamod.write_uirt(path, table)
    return path


def config_text(path, model_lines, train_lines, data_lines="", eval_lines=None):
    text = f"""\
[data]
path = {path}
format = uirt
{data_lines}
[model]
{model_lines}

[train]
{train_lines}
"""
    if eval_lines is not None:
        text += f"\n[eval]\n{eval_lines}\n"
    return text

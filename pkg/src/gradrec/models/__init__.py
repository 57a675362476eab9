"""Model implementations grouped by scenario."""

from gradrec.models.baselines import GlobalMeanRating, PopularityRanker
from gradrec.models.ranking import BprMf, Cdae, Cml, NeuMf
from gradrec.models.rating import BiasedSvd, FactorizationMachine, ItemAutoRec
from gradrec.models.sequential import AttRec, Caser, Prme

__all__ = [
    "AttRec",
    "BiasedSvd",
    "BprMf",
    "Caser",
    "Cdae",
    "Cml",
    "FactorizationMachine",
    "GlobalMeanRating",
    "ItemAutoRec",
    "NeuMf",
    "PopularityRanker",
    "Prme",
]

"""Shared, cached phantom comparisons (expensive; computed once per session)."""
import time
from functools import lru_cache

from foursim.experiment import Comparison, run, score


@lru_cache(maxsize=None)
def chart_results():
    c = Comparison()
    t0 = time.perf_counter()
    res = run(c)
    return c, res, time.perf_counter() - t0


@lru_cache(maxsize=None)
def chart_scores():
    c, res, _ = chart_results()
    return score(c, res)


@lru_cache(maxsize=None)
def leakage_scores(seed):
    c = Comparison(seed=seed, estimate=False, independent_pairs=False)
    return score(c, run(c), rfrc=False)


@lru_cache(maxsize=None)
def filament_scores():
    c = Comparison(layers=[(0, "filaments", 0.0)], modes=("full_4i",), estimate=False, seed=1)
    return score(c, run(c))

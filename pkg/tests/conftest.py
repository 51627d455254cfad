"""Shared small-scale fixtures for the unit suite.

Everything here is deliberately tiny (a couple thousand base vectors in
low dimension) so individual test files stay fast; the acceptance module
builds its own desk-scale fixtures.
"""

import numpy as np
import pytest

from etann import (GradientBoostedRegressor, HnswIndex, IvfIndex,
                   brute_force_knn, generate_training_data,
                   make_gaussian_mixture)

K = 10
EF = 48
NPROBE = 6


@pytest.fixture(scope="session")
def small_data():
    """(base, learn, test) split of a small clustered dataset."""
    X = make_gaussian_mixture(1700, 12, 6, seed=11)
    return X[:1500], X[1500:1650], X[1650:]


@pytest.fixture(scope="session")
def base(small_data):
    return small_data[0]


@pytest.fixture(scope="session")
def learn_queries(small_data):
    return small_data[1]


@pytest.fixture(scope="session")
def test_queries(small_data):
    return small_data[2]


@pytest.fixture(scope="session")
def hnsw(base):
    return HnswIndex(M=8, ef_construction=80, random_state=0).fit(base)


@pytest.fixture(scope="session")
def ivf(base):
    return IvfIndex(n_clusters=24, random_state=0).fit(base)


@pytest.fixture(scope="session")
def gt_learn(base, learn_queries):
    return brute_force_knn(base, learn_queries, K)


@pytest.fixture(scope="session")
def gt_test(base, test_queries):
    return brute_force_knn(base, test_queries, K)


@pytest.fixture(scope="session")
def hnsw_traindata(hnsw, learn_queries, gt_learn):
    return generate_training_data(hnsw, learn_queries, gt_learn, K,
                                  search_params={"ef_search": EF}, stride=4)


@pytest.fixture(scope="session")
def hnsw_model(hnsw_traindata):
    model = GradientBoostedRegressor(n_estimators=40, max_depth=4,
                                     min_samples_leaf=5,
                                     clip_range=(0.0, 1.0), random_state=0)
    model.fit(hnsw_traindata.features, hnsw_traindata.labels)
    return model


@pytest.fixture(scope="session")
def effort_table(hnsw_traindata):
    return hnsw_traindata.effort_table()


@pytest.fixture(scope="session")
def ivf_traindata(ivf, learn_queries, gt_learn):
    return generate_training_data(ivf, learn_queries, gt_learn, K,
                                  search_params={"nprobe": NPROBE}, stride=4)


@pytest.fixture(scope="session")
def ivf_model(ivf_traindata):
    model = GradientBoostedRegressor(n_estimators=40, max_depth=4,
                                     min_samples_leaf=5,
                                     clip_range=(0.0, 1.0), random_state=0)
    model.fit(ivf_traindata.features, ivf_traindata.labels)
    return model

import numpy as np
import pytest

import bcp_distill as bd


@pytest.fixture(scope="session")
def task():
    return bd.sample_task(5, 30, 2.5, bd.new_stream(1).child("task"))


@pytest.fixture(scope="session")
def small_splits(task):
    stream = bd.new_stream(1)
    dataset = bd.generate(task, 3000, stream.child("data"))
    return bd.split(dataset, 0.5, stream.child("split"))


@pytest.fixture(scope="session")
def small_train(small_splits):
    return small_splits[0]


@pytest.fixture(scope="session")
def small_test(small_splits):
    return small_splits[1]


@pytest.fixture()
def tiny_task():
    return bd.TaskSpec(2, 1, 2.5, np.array([[-1.0], [1.0]]))

import numpy as np
import pytest

from mmfc import Dataset, Model, ModelConfig, VariableSchema


def mixed_schemas():
    return [
        VariableSchema("y1", "ordinal", 3, "focus"),
        VariableSchema("y2", "ordinal", 3, "focus"),
        VariableSchema("xa", "nominal", 3, "focus"),
        VariableSchema("b1", "ordinal", 3, "remainder"),
        VariableSchema("b2", "nominal", 2, "remainder"),
    ]


def random_dataset(schemas, n, seed, missing_rate=0.0):
    rng = np.random.default_rng(seed)
    values = np.column_stack([rng.integers(1, s.levels + 1, n) for s in schemas])
    mask = rng.random((n, len(schemas))) < missing_rate
    return Dataset(schemas, values, mask)


@pytest.fixture
def tiny_model():
    schemas = mixed_schemas()
    config = ModelConfig(n_top=3, n_z=3, n_x=3, n_rem=3)
    return Model(schemas, config)


@pytest.fixture
def tiny_data():
    return random_dataset(mixed_schemas(), 30, seed=11, missing_rate=0.2)

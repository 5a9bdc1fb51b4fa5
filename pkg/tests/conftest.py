"""Shared fixtures: small deterministic traces and their statistics."""

import numpy as np
import pytest

from ripplekit import (
    LayerTrace,
    SyntheticTraceSpec,
    extract_stats,
    generate_clustered_trace,
)


@pytest.fixture(scope="session")
def clustered_spec():
    return SyntheticTraceSpec(
        neuron_count=100,
        token_count=400,
        target_sparsity=0.1,
        cluster_count=5,
        cluster_fidelity=1.0,
        seed=7,
    )


@pytest.fixture(scope="session")
def clustered_trace(clustered_spec):
    return generate_clustered_trace(clustered_spec)


@pytest.fixture(scope="session")
def clustered_stats(clustered_trace):
    return extract_stats(clustered_trace)


@pytest.fixture
def tiny_trace():
    tokens = tuple(
        np.asarray(t, dtype=np.int32)
        for t in ([0, 1], [0, 2], [0, 1, 2], [3], [])
    )
    return LayerTrace(layer_id=1, neuron_count=5, bundle_width=2, tokens=tokens)


def random_trace(rng, neuron_count, token_count, max_active=None):
    """Uniformly random trace; shared by the property tests."""
    hi = neuron_count if max_active is None else max_active
    tokens = []
    for _ in range(token_count):
        k = int(rng.integers(0, hi + 1))
        tokens.append(np.sort(rng.choice(neuron_count, size=k, replace=False)).astype(np.int32))
    return LayerTrace(layer_id=0, neuron_count=neuron_count, bundle_width=2, tokens=tuple(tokens))

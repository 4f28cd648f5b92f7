"""Shared helpers for the test suite: seeded random matrix factories."""

import numpy as np
import pytest


def rand_sym(rng, n, scale=1.0):
    a = rng.standard_normal((n, n)) * scale
    return (a + a.T) / 2.0


def rand_psd(rng, n, scale=1.0):
    a = rng.standard_normal((n, n)) * scale
    return a @ a.T / max(n, 1)


def rand_pd(rng, n, scale=1.0, jitter=0.1):
    return rand_psd(rng, n, scale) + jitter * np.eye(n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)

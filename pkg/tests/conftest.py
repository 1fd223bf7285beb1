"""Shared fixtures: small tori, fixed seeds, and a writable run directory."""

import json

import pytest

from stowave.kernels import GaussianKernel, RieszKernel
from stowave.noise import SeedPolicy, TorusGrid
from stowave.solver import SineShiftSigma


@pytest.fixture
def small_grid():
    return TorusGrid(16, 16.0)


@pytest.fixture
def tiny_grid():
    return TorusGrid(8, 8.0)


@pytest.fixture
def seed():
    return SeedPolicy(20240607)


@pytest.fixture
def gaussian():
    return GaussianKernel(1.0)


@pytest.fixture
def riesz():
    return RieszKernel(1.0)


@pytest.fixture
def sine_sigma():
    return SineShiftSigma(0.5)


@pytest.fixture
def write_config(tmp_path):
    """Write a config dict to disk and return its path; output goes under tmp_path."""
    def _write(data, name="config.json"):
        data = dict(data)
        data.setdefault("output_dir", str(tmp_path / "run"))
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return str(path)
    return _write

# tests/conftest.py
import os

os.environ.setdefault("ENVIRONMENT", "test")
os.environ.setdefault("CELERY_ENABLED", "false")
os.environ.setdefault("CACHE_ENABLED", "false")

import numpy as np
import pytest

from app.config import settings
from app.models import DiskProblem, GlobalSolutionParams, PolarGridSpec


@pytest.fixture(autouse=True)
def _log_dir(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "log_dir", str(tmp_path / "logs"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def three_bumps():
    """U con N = 2, λ = 20, ξ = 1: máximos en las raíces cúbicas de la unidad"""
    return GlobalSolutionParams(N=2, lam=20.0, xi=1.0)


def disk_problem(N=0, tau=1.0, n_r=32, n_theta=16, **kwargs) -> DiskProblem:
    grid = PolarGridSpec(n_r=n_r, n_theta=n_theta, grading=kwargs.pop("grading", 0.0),
                         cluster_radius=kwargs.pop("cluster_radius", 0.0),
                         angular_grading=kwargs.pop("angular_grading", 0.0),
                         angular_clusters=kwargs.pop("angular_clusters", 1))
    return DiskProblem(N=N, tau=tau, grid=grid, **kwargs)


@pytest.fixture
def make_problem():
    return disk_problem

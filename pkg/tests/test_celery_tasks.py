# tests/test_celery_tasks.py
from app.config import settings
from app.tasks.celery_tasks import branch_run, dispatch, dispatch_many, identity_chunk
from app.utils.coefficients import modulated_coefficient
from app.utils.serialization import to_jsonable

from .conftest import disk_problem


def test_identity_chunk_runs_locally():
    result = identity_chunk.apply(kwargs={"n_min": 1, "n_max": 4}).get()
    assert result["status"] == "success"
    assert result["metadata"]["fallidos"] == 0
    assert {row["N"] for row in result["rows"]} == {1, 2, 3, 4}
    assert all(row["pass"] for row in result["rows"])


def test_identity_chunk_reports_size_cap(monkeypatch):
    monkeypatch.setattr(settings, "circulant_sweep_cap", 3)
    result = identity_chunk.apply(kwargs={"n_min": 1, "n_max": 5}).get()
    assert result["status"] == "failed"
    assert result["rows"] == []


def test_dispatch_without_workers():
    assert not settings.celery_enabled
    single = dispatch(identity_chunk, n_min=2, n_max=2)
    many = dispatch_many(identity_chunk, [{"n_min": 1, "n_max": 1}, {"n_min": 2, "n_max": 2}])
    assert [r["n_min"] for r in many] == [1, 2]
    assert single["rows"] == many[1]["rows"]


def test_branch_run_stops_before_first_step(tmp_path):
    problem = disk_problem(N=1, n_r=48, n_theta=64, grading=3.0, cluster_radius=0.3,
                           coefficient=modulated_coefficient(1, 0.09, 1.0))
    result = branch_run.apply(kwargs={"problem": to_jsonable(problem.model_dump()), "schedule": [8.0, 9.0],
                                      "delta": 0.3, "resolution_limit": 1e-6,
                                      "output_dir": str(tmp_path)}).get()
    assert result["status"] == "failed"
    assert result["reason"] == "resolution_limit"
    assert result["steps"] == [] and result["files"] == []

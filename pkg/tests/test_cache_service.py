# tests/test_cache_service.py
import fnmatch
import json
import os

import pytest

from app.config import settings
from app.models import ExperimentCommand, ExperimentConfig
from app.services.cache_service import CacheService
from app.services.experiment_runner import run


class FakeRedis:
    """Subconjunto de la API de redis usado por CacheService"""

    def __init__(self):
        self.store = {}
        self.ttls = {}

    def get(self, key):
        return self.store.get(key)

    def setex(self, key, ttl, value):
        self.store[key] = value.encode("utf-8")
        self.ttls[key] = ttl

    def ttl(self, key):
        return self.ttls.get(key, -2)

    def scan_iter(self, match="*"):
        return [k for k in list(self.store) if fnmatch.fnmatch(k, match)]

    def delete(self, key):
        self.store.pop(key, None)
        self.ttls.pop(key, None)


class BrokenRedis:
    def __getattr__(self, name):
        def fail(*args, **kwargs):
            raise ConnectionError("redis no disponible")
        return fail


@pytest.fixture
def cache():
    return CacheService(FakeRedis())


def test_round_trip_and_key_format(cache):
    payload = {"params": {"N": 3, "L": 0.2 + 0.1j}, "seed": 1}
    assert cache.get_result("locate", payload) is None
    cache.set_result("locate", payload, {"status": "success", "value": 1.5})
    assert cache.get_result("locate", payload) == {"status": "success", "value": 1.5}
    key = cache.key_for("locate", payload)
    assert key.startswith("cache:locate:") and key in cache.redis_client.store
    assert cache.get_ttl("locate", payload) == settings.cache_ttl


def test_payload_order_does_not_change_key(cache):
    assert cache.key_for("family", {"a": 1, "b": 2}) == cache.key_for("family", {"b": 2, "a": 1})
    assert cache.key_for("family", {"a": 1}) != cache.key_for("locate", {"a": 1})


def test_invalidate_only_touches_command(cache):
    cache.set_result("locate", {"a": 1}, {"x": 1})
    cache.set_result("locate", {"a": 2}, {"x": 2})
    cache.set_result("family", {"a": 1}, {"x": 3})
    cache.invalidate("locate")
    assert cache.get_result("locate", {"a": 1}) is None
    assert cache.get_result("family", {"a": 1}) == {"x": 3}


def test_errors_are_swallowed():
    cache = CacheService(BrokenRedis())
    assert cache.get_result("locate", {}) is None
    cache.set_result("locate", {}, {"x": 1})
    cache.invalidate("locate")
    assert cache.get_ttl("locate", {}) == 0


def test_runner_restores_artifacts_from_cache(tmp_path, monkeypatch, cache):
    monkeypatch.setattr(settings, "cache_enabled", True)
    params = {"N": 2, "delta": 0.05, "L": [0.2, 0.1]}
    first = run(ExperimentConfig(command=ExperimentCommand.LOCATE, params=params,
                                 output_dir=str(tmp_path / "a")), cache=cache)
    assert not first.cached
    second = run(ExperimentConfig(command=ExperimentCommand.LOCATE, params=params,
                                  output_dir=str(tmp_path / "b")), cache=cache)
    assert second.cached
    assert second.status == first.status
    assert [c.name for c in second.checks] == [c.name for c in first.checks]
    with open(tmp_path / "a" / "locate.json", "rb") as fa, open(tmp_path / "b" / "locate.json", "rb") as fb:
        assert fa.read() == fb.read()
    with open(os.path.join(tmp_path, "b", "manifest.json"), encoding="utf-8") as fh:
        assert json.load(fh)["cached"] is True

# app/services/cache_service.py
import json
import logging
from datetime import datetime, timezone
from typing import Any, Dict, Optional

import redis

from ..config import settings
from ..utils.serialization import config_hash, to_jsonable

logger = logging.getLogger(__name__)


class CacheService:
    """Resultados de experimentos terminados en redis; los errores se registran y se ignoran"""

    def __init__(self, client=None):
        self.redis_client = client if client is not None else redis.from_url(settings.redis_url)
        self.default_ttl = settings.cache_ttl

    def _generate_key(self, command: str, identifier: str) -> str:
        """Genera una clave única para cache"""
        return f"cache:{command}:{identifier}"

    def key_for(self, command: str, payload: Dict[str, Any]) -> str:
        return self._generate_key(command, config_hash(payload))

    def get_result(self, command: str, payload: Dict[str, Any]) -> Optional[Dict[str, Any]]:
        """Obtiene un resultado guardado para (comando, configuración)"""
        try:
            key = self.key_for(command, payload)
            cached_data = self.redis_client.get(key)
            if cached_data:
                logger.info(f"Cache hit para {key}")
                return json.loads(cached_data).get("result")
            logger.info(f"Cache miss para {key}")
            return None
        except Exception as e:
            logger.error(f"Error obteniendo cache: {e}")
            return None

    def set_result(self, command: str, payload: Dict[str, Any], result: Dict[str, Any], ttl: int = None):
        """Guarda un resultado (TTL de la configuración por defecto)"""
        try:
            key = self.key_for(command, payload)
            ttl = ttl or self.default_ttl
            data = {
                "result": to_jsonable(result),
                "cached_at": datetime.now(timezone.utc).isoformat(),
                "ttl": ttl,
            }
            self.redis_client.setex(key, ttl, json.dumps(data, sort_keys=True))
            logger.info(f"Resultado guardado en cache: {key} por {ttl} segundos")
        except Exception as e:
            logger.error(f"Error guardando en cache: {e}")

    def invalidate(self, command: str):
        """Invalida todos los resultados de un comando"""
        try:
            pattern = self._generate_key(command, "*")
            for key in self.redis_client.scan_iter(match=pattern):
                self.redis_client.delete(key)
            logger.info(f"Cache invalidado para {command}")
        except Exception as e:
            logger.error(f"Error invalidando cache: {e}")

    def get_ttl(self, command: str, payload: Dict[str, Any]) -> int:
        try:
            ttl = self.redis_client.ttl(self.key_for(command, payload))
            return ttl if ttl > 0 else 0
        except Exception as e:
            logger.error(f"Error obteniendo TTL: {e}")
            return 0

# app/config.py
import os
from pydantic_settings import BaseSettings
from dotenv import load_dotenv

from .exceptions import ConfigError

load_dotenv()

class Settings(BaseSettings):
    # Entorno
    environment: str = os.getenv("ENVIRONMENT", "development")

    # Redis / Celery
    redis_url: str = os.getenv("REDIS_URL", "redis://localhost:6379/0")
    celery_enabled: bool = os.getenv("CELERY_ENABLED", "false").lower() == "true"
    worker_concurrency: int = int(os.getenv("WORKER_CONCURRENCY", "4"))

    # Cache de resultados
    cache_enabled: bool = os.getenv("CACHE_ENABLED", "false").lower() == "true"
    cache_ttl: int = int(os.getenv("CACHE_TTL", "3600"))

    # Salidas
    output_dir: str = os.getenv("OUTPUT_DIR", "runs")
    default_seed: int = int(os.getenv("DEFAULT_SEED", "12345"))
    float_digits: int = int(os.getenv("FLOAT_DIGITS", "17"))

    # Solver
    newton_tol: float = float(os.getenv("NEWTON_TOL", "1e-10"))
    newton_max_iter: int = int(os.getenv("NEWTON_MAX_ITER", "40"))
    resolution_limit: float = float(os.getenv("RESOLUTION_LIMIT", "0.1"))

    # Álgebra circulante
    circulant_dense_cap: int = int(os.getenv("CIRCULANT_DENSE_CAP", "10000"))
    circulant_sweep_cap: int = int(os.getenv("CIRCULANT_SWEEP_CAP", "100000"))
    circulant_inverse_sweep_cap: int = int(os.getenv("CIRCULANT_INVERSE_SWEEP_CAP", "200"))
    circulant_spot_stride: int = int(os.getenv("CIRCULANT_SPOT_STRIDE", "1000"))

    # Logs
    log_level: str = os.getenv("LOG_LEVEL", "INFO")
    log_format: str = os.getenv("LOG_FORMAT", "json")
    log_dir: str = os.getenv("LOG_DIR", "logs")

    @property
    def is_production(self) -> bool:
        return self.environment.lower() == "production"

    @property
    def is_development(self) -> bool:
        return self.environment.lower() == "development"

    model_config = {
        "env_file": ".env",
        "extra": "allow"
    }

# Crear instancia
settings = Settings()

def validate_required_settings():
    """Valida configuraciones críticas al inicio"""
    errors = []

    if settings.celery_enabled and not settings.redis_url:
        errors.append("REDIS_URL es requerido cuando CELERY_ENABLED=true")

    if settings.cache_enabled and not settings.redis_url:
        errors.append("REDIS_URL es requerido cuando CACHE_ENABLED=true")

    if settings.newton_tol <= 0:
        errors.append("NEWTON_TOL debe ser positivo")

    if settings.resolution_limit <= 0:
        errors.append("RESOLUTION_LIMIT debe ser positivo")

    if settings.circulant_dense_cap > settings.circulant_sweep_cap:
        errors.append("CIRCULANT_DENSE_CAP no puede superar CIRCULANT_SWEEP_CAP")

    if settings.circulant_inverse_sweep_cap < 1:
        errors.append("CIRCULANT_INVERSE_SWEEP_CAP debe ser ≥ 1")

    if settings.circulant_spot_stride < 0:
        errors.append("CIRCULANT_SPOT_STRIDE no puede ser negativo")

    if errors:
        raise ConfigError(f"Configuración inválida: {'; '.join(errors)}")

if settings.environment != "test":
    validate_required_settings()

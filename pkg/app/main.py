# app/main.py
import argparse
import json
import logging
import logging.config
import os
import sys
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from .config import settings, validate_required_settings
from .exceptions import ConfigError
from .models import ExperimentCommand, ExperimentConfig

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


def setup_logging():
    try:
        os.makedirs(settings.log_dir, exist_ok=True)

        log_config = {
            "version": 1,
            "disable_existing_loggers": False,
            "formatters": {
                "default": {
                    "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
                },
                "json": {
                    "format": '{"time": "%(asctime)s", "logger": "%(name)s", "level": "%(levelname)s", "message": "%(message)s"}'
                }
            },
            "handlers": {
                "file": {
                    "class": "logging.handlers.RotatingFileHandler",
                    "filename": os.path.join(settings.log_dir, "liouville_lab.log"),
                    "maxBytes": 10485760,  # 10MB
                    "backupCount": 5,
                    "formatter": "json" if settings.log_format == "json" else "default",
                    "mode": "a"
                },
                "console": {
                    "class": "logging.StreamHandler",
                    "formatter": "default"
                }
            },
            "root": {
                "level": settings.log_level,
                "handlers": ["file", "console"]
            }
        }

        logging.config.dictConfig(log_config)

    except Exception as e:
        # Fallback a logging básico si falla
        logging.basicConfig(
            level=settings.log_level,
            format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            handlers=[logging.StreamHandler()]
        )
        logging.getLogger(__name__).warning(f"No se pudo configurar el log en archivo, solo consola: {e}")


logger = logging.getLogger(__name__)

RESERVED_KEYS = ("output_dir", "seed")


def _parse_value(text: str) -> Any:
    """JSON si se puede ('[8, 9]', '0.1', 'true'); si no, texto ('0.2+0.1i', 'exp(0.1*x1)')"""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config_file(path: str) -> Dict[str, Any]:
    """TOML o JSON plano: claves de parámetros más output_dir/seed opcionales"""
    try:
        if path.endswith(".json"):
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        else:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
    except (OSError, ValueError) as e:
        raise ConfigError(f"No se pudo leer {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: se esperaba una tabla de claves")
    return data


def build_parser() -> argparse.ArgumentParser:
    from .services.experiment_runner import COMMAND_DEFAULTS

    parser = argparse.ArgumentParser(prog="liouville-lab",
                                     description="Laboratorio numérico para la ecuación de Liouville singular")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in ExperimentCommand:
        p = sub.add_parser(command.value)
        p.add_argument("--config", help="archivo TOML o JSON con los parámetros")
        p.add_argument("--output-dir", dest="output_dir")
        p.add_argument("--seed", type=int)
        for key in COMMAND_DEFAULTS[command]:
            p.add_argument(f"--{key}", dest=f"param_{key}", type=_parse_value, default=None, metavar="VALUE")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    command = ExperimentCommand(args.command)
    data: Dict[str, Any] = load_config_file(args.config) if args.config else {}
    output_dir = data.pop("output_dir", None)
    seed = data.pop("seed", None)
    params = dict(data)
    for key, value in vars(args).items():
        if key.startswith("param_") and value is not None:
            params[key[len("param_"):]] = value
    if args.output_dir:
        output_dir = args.output_dir
    if args.seed is not None:
        seed = args.seed
    return ExperimentConfig(
        command=command,
        params=params,
        output_dir=output_dir or os.path.join(settings.output_dir, command.value),
        seed=settings.default_seed if seed is None else seed,
    )


def main(argv: Optional[List[str]] = None) -> int:
    setup_logging()
    from .services.experiment_runner import exit_code, run

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if settings.environment != "test":
            validate_required_settings()
        config = config_from_args(args)
        result = run(config)
    except (ConfigError, ValidationError) as e:
        logger.error(f"Configuración inválida: {e}")
        print(json.dumps({"status": "config_error", "error": str(e)}, sort_keys=True), file=sys.stderr)
        return 2
    except Exception as e:
        logger.error(f"Error inesperado: {e}")
        print(json.dumps({"status": "error", "error": f"{type(e).__name__}: {e}"}, sort_keys=True), file=sys.stderr)
        return 1

    failed = [c.name for c in result.checks if not c.passed]
    summary = {"status": result.status.value, "failed_checks": failed, "artifacts": result.artifacts,
               "cached": result.cached}
    print(json.dumps(summary, sort_keys=True))
    return exit_code(result)


if __name__ == "__main__":
    sys.exit(main())

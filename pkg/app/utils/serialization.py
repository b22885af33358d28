# app/utils/serialization.py
import csv
import hashlib
import json
import logging
import os
import struct
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..config import settings

logger = logging.getLogger(__name__)

GRID_MAGIC = b"LVGR"
GRID_VERSION = 1
HEADER_SIZE = 64
# magic, versión, n_r, n_θ, N, tau
_HEADER = struct.Struct("<4sIIIId")


def format_float(value: float, digits: Optional[int] = None) -> str:
    digits = settings.float_digits if digits is None else digits
    return format(float(value), f".{digits}g")


def to_jsonable(value: Any) -> Any:
    """numpy, complejos y modelos pydantic a tipos JSON; complejos como [re, im]"""
    if hasattr(value, "model_dump"):
        return to_jsonable(value.model_dump(by_alias=True))
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real), float(value.imag)]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return value


def write_json(path: str, data: Any) -> str:
    """UTF-8, claves ordenadas; los flotantes usan la representación exacta de ida y vuelta"""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(to_jsonable(data), fh, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=True)
        fh.write("\n")
    return path


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    if value is None:
        return ""
    return str(value)


def flatten_row(row: Dict[str, Any]) -> Dict[str, Any]:
    """Separa complejos en columnas _re/_im"""
    out: Dict[str, Any] = {}
    for key, value in row.items():
        if isinstance(value, (complex, np.complexfloating)):
            out[f"{key}_re"] = float(value.real)
            out[f"{key}_im"] = float(value.imag)
        else:
            out[key] = value
    return out


def write_csv(path: str, rows: Iterable[Dict[str, Any]], columns: Optional[Sequence[str]] = None) -> str:
    """CSV RFC-4180 con 17 cifras significativas"""
    rows = [flatten_row(to_jsonable_row(r)) for r in rows]
    if columns is None:
        columns = []
        for r in rows:
            for key in r:
                if key not in columns:
                    columns.append(key)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(columns)
        for r in rows:
            writer.writerow([_cell(r.get(c)) for c in columns])
    return path


def to_jsonable_row(row: Any) -> Dict[str, Any]:
    if hasattr(row, "model_dump"):
        return row.model_dump(by_alias=True)
    return dict(row)


def write_grid(path: str, values: np.ndarray, tau: float, N: int) -> str:
    """Malla binaria: cabecera de 64 bytes y valores float64 little-endian fila por anillo"""
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.ndim != 2:
        raise ValueError("se espera un arreglo (n_r, n_theta)")
    n_r, n_theta = values.shape
    header = _HEADER.pack(GRID_MAGIC, GRID_VERSION, n_r, n_theta, N, float(tau))
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header.ljust(HEADER_SIZE, b"\0"))
        fh.write(values.tobytes())
    return path


def read_grid(path: str) -> Tuple[Dict[str, Any], np.ndarray]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER_SIZE:
        raise ValueError(f"{path}: archivo truncado")
    magic, version, n_r, n_theta, N, tau = _HEADER.unpack(raw[:_HEADER.size])
    if magic != GRID_MAGIC:
        raise ValueError(f"{path}: firma {magic!r} desconocida")
    if version != GRID_VERSION:
        raise ValueError(f"{path}: versión {version} no soportada")
    values = np.frombuffer(raw[HEADER_SIZE:], dtype="<f8")
    if values.size != n_r * n_theta:
        raise ValueError(f"{path}: se esperaban {n_r * n_theta} valores, hay {values.size}")
    header = {"magic": magic.decode(), "version": version, "n_r": n_r, "n_theta": n_theta, "N": N, "tau": tau}
    return header, values.reshape(n_r, n_theta).copy()


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def config_hash(payload: Dict[str, Any]) -> str:
    """Hash estable de una configuración (JSON con claves ordenadas)"""
    text = json.dumps(to_jsonable(payload), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def artifact_hashes(paths: List[str], root: str) -> Dict[str, str]:
    return {os.path.relpath(p, root): sha256_file(p) for p in sorted(paths)}

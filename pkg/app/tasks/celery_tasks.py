# app/tasks/celery_tasks.py
import logging
import os
import time
import traceback
from typing import List, Optional

from celery import Celery, Task

from ..config import settings
from ..exceptions import BranchTerminated
from ..models import DiskProblem
from ..services import circulant_algebra
from ..services.liouville_solver import continue_branch, step_report, write_snapshot
from ..utils.serialization import to_jsonable

logger = logging.getLogger(__name__)

celery_app = Celery(
    "liouville_lab",
    broker=settings.redis_url,
    backend=settings.redis_url
)

celery_app.conf.update(
    task_serializer='json',
    accept_content=['json'],
    result_serializer='json',
    timezone='UTC',
    enable_utc=True,
    task_track_started=True,
    task_send_sent_event=True,
    worker_concurrency=settings.worker_concurrency
)


class CallbackTask(Task):
    """Task que registra el resultado y reporta progreso"""

    def on_success(self, retval, task_id, args, kwargs):
        """Llamado cuando la tarea termina exitosamente"""
        status = retval.get("status") if isinstance(retval, dict) else None
        logger.info(f"Tarea {self.name} [{task_id}] terminada: {status}")

    def on_failure(self, exc, task_id, args, kwargs, einfo):
        """Llamado cuando la tarea falla"""
        logger.error(f"Tarea {self.name} [{task_id}] falló: {exc}")

    def report_progress(self, progress: float, **meta):
        """update_state solo con worker real; en ejecución local no hay backend que actualizar"""
        if self.request.called_directly or self.request.is_eager:
            logger.debug(f"{self.name}: progreso {progress:.0f}%")
            return
        self.update_state(state='PROCESSING', meta={'progress': progress, **meta})


def _identity_row(report) -> dict:
    return {
        "identity_name": report.identity_name,
        "N": report.N,
        "index": report.index,
        "lhs_re": float(report.lhs.real),
        "lhs_im": float(report.lhs.imag),
        "rhs_re": float(report.rhs.real),
        "rhs_im": float(report.rhs.imag),
        "abs_error": report.abs_error,
        "tol": report.tol,
        "pass": report.passed,
    }


@celery_app.task(bind=True, base=CallbackTask)
def identity_chunk(self, n_min: int, n_max: int, tol: Optional[float] = None):
    """Barrido de identidades circulantes para N en [n_min, n_max]"""
    try:
        start_time = time.time()
        total = n_max - n_min + 1
        self.report_progress(0, n_min=n_min, n_max=n_max)

        def progress(N):
            self.report_progress(100.0 * (N - n_min + 1) / total, current=N)

        reports = circulant_algebra.sweep_identities(n_min, n_max, tol, progress=progress)
        rows = [_identity_row(r) for r in reports]
        failed = sum(not r["pass"] for r in rows)
        return {
            "status": "success" if failed == 0 else "partial",
            "n_min": n_min,
            "n_max": n_max,
            "rows": rows,
            "metadata": {"reportes": len(rows), "fallidos": failed, "tiempo_total": time.time() - start_time},
        }
    except Exception as e:
        logger.error(f"Error en barrido de identidades {n_min}..{n_max}: {str(e)}")
        logger.error(traceback.format_exc())
        return {"status": "failed", "error": str(e), "n_min": n_min, "n_max": n_max, "rows": []}


@celery_app.task(bind=True, base=CallbackTask)
def branch_run(self, problem: dict, schedule: List[float], delta: Optional[float] = None,
               resolution_limit: Optional[float] = None, output_dir: Optional[str] = None,
               boundary_law: str = "derived"):
    """Continuación completa de un problema; las instantáneas se escriben en output_dir"""
    try:
        start_time = time.time()
        self.report_progress(0, message='Continuando rama')
        disk = DiskProblem.model_validate(problem)
        reason = None
        try:
            branch = continue_branch(disk, schedule, delta=delta, resolution_limit=resolution_limit,
                                     boundary_law=boundary_law)
        except BranchTerminated as e:
            branch, reason = e.branch, e.reason
            logger.warning(f"Rama detenida ({reason}) tras {len(branch)} pasos")

        steps, files = [], []
        for k, field in enumerate(branch):
            self.report_progress(100.0 * (k + 1) / max(len(branch), 1), current=k + 1, total=len(branch))
            row = step_report(field)
            row["step"] = k
            steps.append(row)
            if output_dir:
                files.extend(write_snapshot(field, os.path.join(output_dir, f"step_{k:03d}")))

        if not branch:
            status = "failed"
        elif reason is None:
            status = "success"
        else:
            status = "partial"
        return to_jsonable({
            "status": status,
            "reason": reason,
            "boundary_law": boundary_law,
            "steps": steps,
            "files": files,
            "metadata": {"pasos": len(branch), "programados": len(schedule),
                         "tiempo_total": time.time() - start_time},
        })
    except Exception as e:
        logger.error(f"Error en la continuación: {str(e)}")
        logger.error(traceback.format_exc())
        return {"status": "failed", "error": str(e), "steps": [], "files": []}


def dispatch(task, **kwargs) -> dict:
    """Ejecuta en el pool de workers o localmente con .apply(); el resultado es el mismo dict"""
    if settings.celery_enabled:
        return task.apply_async(kwargs=kwargs).get()
    return task.apply(kwargs=kwargs).get()


def dispatch_many(task, jobs: List[dict]) -> List[dict]:
    if settings.celery_enabled:
        pending = [task.apply_async(kwargs=job) for job in jobs]
        return [p.get() for p in pending]
    return [task.apply(kwargs=job).get() for job in jobs]

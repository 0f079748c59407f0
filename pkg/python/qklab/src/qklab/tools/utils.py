"""
Shared plumbing of the qklab tools: debug logging, worker thread limits,
progress bar settings and the output directory lock
"""

import datetime
import functools
import logging
import multiprocessing as mp
import os
from contextlib import contextmanager
from pathlib import Path
from time import perf_counter
from typing import Generator
import uuid

from qklab.api_utils import ValidationError


#: Worker threads for Gram rows and CV folds when none are requested
DEFAULT_THREADS = min(os.cpu_count() or 4, 4)

LOCK_FILENAME = ".qklab.lock"


def init_logging():
    """
    Return the ``qklab`` logger. With QKLAB_DEBUG set it writes debug records
    to a timestamped ``*-qklab.log`` file per process, otherwise it is silent.
    """
    if not is_qklab_debug():
        logger = logging.getLogger("qklab")
        logger.addHandler(logging.NullHandler())
        return logger

    datetime_now = datetime.datetime.now().strftime("%Y-%m-%d--%H-%M-%S")
    if mp.current_process().name == "MainProcess":
        pid = "main"
    else:
        pid = f"p-{os.getpid()}"

    logger = logging.getLogger("qklab")
    logger.setLevel(logging.DEBUG)
    file_handler = logging.FileHandler(filename=f"{datetime_now}-{pid}-qklab.log")
    file_handler.setFormatter(
        logging.Formatter("%(asctime)s %(levelname)s %(message)s")
    )
    file_handler.setLevel(logging.DEBUG)
    logger.addHandler(file_handler)
    return logger


def logged(log_return: bool = False, log_args: bool = False, log_time: bool = False):
    """
    Debug-log each call of the decorated function under a short call id, with
    its arguments, return value and wall time when requested. Exceptions are
    logged and re-raised.
    """

    def decorator(func):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            logger = logging.getLogger("qklab")
            uid = f"{str(uuid.uuid4())[:2]}:'{func.__name__}'"
            if log_args:
                logger.debug("{0}:{1}, {2}".format(uid, args, kwargs))
            else:
                logger.debug("{0}".format(uid))
            try:
                started = perf_counter()
                ret = func(*args, **kwargs)
            except Exception as exc:
                logger.debug("{0}:Exception:{1}".format(uid, exc))
                raise exc
            if log_time:
                duration_s = perf_counter() - started
                logger.debug("{0}:Done:{1:.3f}s".format(uid, duration_s))
            if log_return:
                logger.debug("{0}:Returned:{1}".format(uid, ret))
            return ret

        return wrapper

    return decorator


logged_all = logged(log_return=True, log_args=True, log_time=True)


@logged(log_return=True)
def limit_threads(requested: int) -> int:
    """Clamp ``requested`` worker threads to the logical cores, < 1 means all"""
    if requested < 1:
        return os.cpu_count() or 4
    return min(os.cpu_count() or requested, requested)


@contextmanager
def exclusive_output(directory: Path) -> Generator[Path, None, None]:
    """
    Hold an exclusive lock file in ``directory`` for the duration of the context,
    creating the directory if needed.

    Raises ValidationError if the directory is not writable or another process
    holds the lock.
    """
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"Output directory is not writable: {directory}") from exc

    lock = directory / LOCK_FILENAME
    try:
        handle = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ValidationError(
            f"Output directory {directory} is locked by another run. "
            f"Remove {lock} if no other qklab process is running."
        )
    except OSError as exc:
        raise ValidationError(f"Output directory is not writable: {directory}") from exc

    try:
        os.write(handle, str(os.getpid()).encode())
        os.close(handle)
        yield directory
    finally:
        try:
            lock.unlink()
        except FileNotFoundError:
            pass


# Not logged, PBAR_DEFAULTS calls it at import
def is_disable_pbar() -> bool:
    """True when QKLAB_PBAR=0 turns off the Gram and CV progress bars"""
    try:
        enabled = bool(int(os.environ.get("QKLAB_PBAR", "1")))
        return not enabled
    except Exception:
        return False


PBAR_DEFAULTS = dict(
    disable=is_disable_pbar(),
    smoothing=0.0,
    dynamic_ncols=True,
    ascii=True,
)


# Not logged, init_logging calls it before a handler exists
def is_qklab_debug() -> bool:
    """True when QKLAB_DEBUG is a non-zero integer or is unparsable"""
    try:
        debug = bool(int(os.environ.get("QKLAB_DEBUG", "0")))
        return debug
    except Exception:
        return True

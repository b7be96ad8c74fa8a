import logging
import threading
from typing import Callable, List, Optional, Sequence

from frame_registration.core.queue_manager import QueueManager
from frame_registration.core.task import PairTask

logger = logging.getLogger(__name__)

POLL_INTERVAL = 0.1


def execute_task(task: PairTask) -> PairTask:
    """Run a task's payload, recording the result or the failure on the task."""
    task.start()
    try:
        task.complete(task.payload())
        logger.debug(f"Task {task.index} ({task.label}) completed")
    except Exception as e:
        logger.error(f"Task {task.index} ({task.label}) failed: {e}", exc_info=True)
        task.fail(e)
    return task


class Worker:
    """Worker thread that processes pair tasks from the queue."""

    def __init__(self, queue_manager: QueueManager, name: str = "worker"):
        """
        Initialize the worker.

        Args:
            queue_manager: Queue manager instance
            name: Thread name, used in log records
        """
        self._queue_manager = queue_manager
        self._name = name
        self._running = False
        self._thread: Optional[threading.Thread] = None
        self._on_task_complete: Optional[Callable[[PairTask], None]] = None

    def start(self) -> None:
        """Start the worker thread."""
        if self._thread is None or not self._thread.is_alive():
            self._running = True
            self._thread = threading.Thread(target=self._worker_loop, name=self._name, daemon=True)
            self._thread.start()
            logger.debug(f"Worker {self._name} started")

    def stop(self) -> None:
        """Stop the worker thread."""
        self._running = False
        if self._thread and self._thread.is_alive():
            self._thread.join(timeout=5.0)
            logger.debug(f"Worker {self._name} stopped")

    def set_callbacks(self, on_task_complete: Optional[Callable[[PairTask], None]] = None) -> None:
        """Set callback function for task completion."""
        self._on_task_complete = on_task_complete

    def _worker_loop(self) -> None:
        """Main worker loop that processes tasks from the queue."""
        while self._running:
            task = self._queue_manager.get_next_task(block=True, timeout=POLL_INTERVAL)
            if task is None:
                continue
            try:
                execute_task(task)
                self._queue_manager.mark_task_complete(task.task_id)
                if self._on_task_complete:
                    self._on_task_complete(task)
            except Exception as e:
                logger.error(f"Worker error: {e}", exc_info=True)
            finally:
                self._queue_manager.task_done()


def run_tasks(tasks: Sequence[PairTask], jobs: int = 1) -> List[PairTask]:
    """
    Execute tasks inline (jobs <= 1) or on ``jobs`` worker threads.

    Returns:
        The tasks ordered by index; failed tasks carry their error and never
        stop the others
    """
    if jobs <= 1 or len(tasks) <= 1:
        return sorted((execute_task(task) for task in tasks), key=lambda t: t.index)

    queue_manager = QueueManager()
    for task in tasks:
        queue_manager.add_task(task)
    total = len(tasks)

    def report_progress(task: PairTask) -> None:
        status = queue_manager.get_queue_status()
        logger.info(f"{status['total_completed']}/{total} tasks finished "
                    f"({status['total_failed']} failed, {status['queue_size']} queued)")
        running = [active["label"] or active["index"] for active in status["active_tasks"]]
        logger.debug(f"Finished {task.label or task.index}; running: {running}")

    workers = [Worker(queue_manager, name=f"worker-{i}") for i in range(min(jobs, total))]
    logger.info(f"Running {total} tasks on {len(workers)} workers")
    for worker in workers:
        worker.set_callbacks(on_task_complete=report_progress)
        worker.start()
    try:
        queue_manager.join()
    finally:
        for worker in workers:
            worker.stop()
    return queue_manager.results_in_order()

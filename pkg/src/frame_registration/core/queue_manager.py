import itertools
import logging
import queue
import threading
from typing import Any, Dict, List, Optional

from frame_registration.core.task import PairTask, TaskStatus

logger = logging.getLogger(__name__)


class QueueManager:
    """Thread-safe queue of pair tasks, served in index order."""

    def __init__(self):
        self._task_queue = queue.PriorityQueue()
        self._active_tasks: Dict[str, PairTask] = {}
        self._completed_tasks: Dict[str, PairTask] = {}
        self._lock = threading.Lock()
        self._sequence = itertools.count()

    def add_task(self, task: PairTask) -> None:
        """Add a task to the queue."""
        with self._lock:
            # ties on index keep insertion order; tasks themselves are never compared
            self._task_queue.put((task.index, next(self._sequence), task))

    def get_next_task(self, block: bool = True, timeout: Optional[float] = None) -> Optional[PairTask]:
        """Get the next task from queue."""
        try:
            _, _, task = self._task_queue.get(block=block, timeout=timeout)
            with self._lock:
                self._active_tasks[task.task_id] = task
            return task
        except queue.Empty:
            return None

    def mark_task_complete(self, task_id: str) -> None:
        """Move a finished task (completed or failed) out of the active set."""
        with self._lock:
            task = self._active_tasks.pop(task_id, None)
            if task is None:
                logger.warning(f"Task {task_id} is not active")
                return
            self._completed_tasks[task_id] = task

    def get_queue_status(self) -> Dict[str, Any]:
        """Get the current status of the queue."""
        with self._lock:
            failed = sum(1 for t in self._completed_tasks.values() if t.status == TaskStatus.FAILED)
            return {
                "queue_size": self._task_queue.qsize(),
                "active_tasks": [task.to_dict() for task in self._active_tasks.values()],
                "total_completed": len(self._completed_tasks),
                "total_failed": failed,
            }

    def task_done(self) -> None:
        """Mark current task as done in the queue."""
        self._task_queue.task_done()

    def join(self) -> None:
        """Block until every queued task has been marked done."""
        self._task_queue.join()

    def results_in_order(self) -> List[PairTask]:
        """Finished tasks sorted by index, independent of completion order."""
        with self._lock:
            return sorted(self._completed_tasks.values(), key=lambda t: t.index)

import logging
import time

import pytest

from frame_registration.core.queue_manager import QueueManager
from frame_registration.core.task import PairTask, TaskStatus
from frame_registration.core.worker import Worker, execute_task, run_tasks

pytestmark = pytest.mark.core


def _failing():
    raise RuntimeError("pair failed")


def test_execute_task_records_result():
    task = execute_task(PairTask(index=0, payload=lambda: 42))
    assert task.status == TaskStatus.COMPLETED
    assert task.result == 42


def test_execute_task_records_failure():
    task = execute_task(PairTask(index=0, payload=_failing))
    assert task.status == TaskStatus.FAILED
    assert task.error == "RuntimeError: pair failed"


def test_worker_processes_queue(worker: Worker, queue_manager: QueueManager):
    """Test that the worker drains the queue and reports every task."""
    finished = []
    worker.set_callbacks(on_task_complete=finished.append)
    for index in range(3):
        queue_manager.add_task(PairTask(index=index, payload=lambda i=index: i * i))

    worker.start()
    queue_manager.join()

    assert [task.result for task in queue_manager.results_in_order()] == [0, 1, 4]
    assert sorted(task.index for task in finished) == [0, 1, 2]


def test_worker_survives_failures(worker: Worker, queue_manager: QueueManager):
    """A failing task does not stop the tasks after it."""
    queue_manager.add_task(PairTask(index=0, payload=_failing))
    queue_manager.add_task(PairTask(index=1, payload=lambda: "ok"))

    worker.start()
    queue_manager.join()

    first, second = queue_manager.results_in_order()
    assert first.status == TaskStatus.FAILED
    assert second.result == "ok"
    assert queue_manager.get_queue_status()["total_failed"] == 1


def test_stopped_worker_leaves_queue_alone(worker: Worker, queue_manager: QueueManager):
    worker.start()
    worker.stop()
    queue_manager.add_task(PairTask(index=0, payload=lambda: None))
    time.sleep(0.05)

    assert queue_manager.get_queue_status()["queue_size"] == 1


def test_run_tasks_inline_keeps_index_order():
    tasks = [PairTask(index=index, payload=lambda i=index: i) for index in (2, 0, 1)]
    assert [task.result for task in run_tasks(tasks, jobs=1)] == [0, 1, 2]


def test_run_tasks_parallel_matches_inline():
    """Completion order differs from index order; output order does not."""
    def payload(i):
        time.sleep(0.02 * (4 - i))
        return i * 10

    parallel = run_tasks([PairTask(index=i, payload=lambda i=i: payload(i)) for i in range(5)], jobs=3)
    inline = run_tasks([PairTask(index=i, payload=lambda i=i: payload(i)) for i in range(5)], jobs=1)

    assert [task.index for task in parallel] == list(range(5))
    assert [task.result for task in parallel] == [task.result for task in inline]


def test_run_tasks_parallel_reports_failures():
    tasks = [PairTask(index=0, payload=lambda: 1), PairTask(index=1, payload=_failing),
             PairTask(index=2, payload=lambda: 3)]
    finished = run_tasks(tasks, jobs=2)

    assert [task.succeeded for task in finished] == [True, False, True]
    assert finished[2].result == 3


def test_run_tasks_logs_progress(caplog):
    tasks = [PairTask(index=i, payload=lambda i=i: i, label=f"pair {i}") for i in range(3)]
    tasks.append(PairTask(index=3, payload=_failing, label="pair 3"))
    with caplog.at_level(logging.INFO, logger="frame_registration.core.worker"):
        run_tasks(tasks, jobs=2)

    progress = [record.getMessage() for record in caplog.records if "tasks finished" in record.getMessage()]
    assert len(progress) == 4
    assert "4/4 tasks finished (1 failed, 0 queued)" in progress

import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Optional


class TaskStatus(Enum):
    """Task execution status enumeration."""
    QUEUED = "queued"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class PairTask:
    """One unit of pair-level work (a registration or a synthesis) with its bookkeeping."""
    index: int
    payload: Callable[[], Any]
    label: str = ""
    task_id: str = field(default_factory=lambda: str(uuid.uuid4()))
    status: TaskStatus = TaskStatus.QUEUED
    result: Any = None
    error: Optional[str] = None
    exception: Optional[BaseException] = field(default=None, repr=False)
    created_at: float = field(default_factory=time.time)
    started_at: Optional[float] = None
    completed_at: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        """Convert task to dictionary representation."""
        return {
            "task_id": self.task_id,
            "index": self.index,
            "label": self.label,
            "status": self.status.value,
            "error": self.error,
            "created_at": self.created_at,
            "started_at": self.started_at,
            "completed_at": self.completed_at,
            "execution_time": (self.completed_at - self.started_at) if self.completed_at and self.started_at else None
        }

    @property
    def succeeded(self) -> bool:
        return self.status == TaskStatus.COMPLETED

    def start(self):
        """Mark task as started."""
        self.status = TaskStatus.RUNNING
        self.started_at = time.time()

    def complete(self, result: Any):
        """Mark task as completed."""
        self.status = TaskStatus.COMPLETED
        self.result = result
        self.completed_at = time.time()

    def fail(self, exception: BaseException):
        """Mark task as failed, keeping the exception for the caller."""
        self.status = TaskStatus.FAILED
        self.exception = exception
        self.error = f"{type(exception).__name__}: {exception}"
        self.completed_at = time.time()

    def __post_init__(self):
        if not self.task_id:
            self.task_id = str(uuid.uuid4())

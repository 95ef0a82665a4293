"""Agent-steered dynamic task workflows with a pass-by-reference data fabric.

The pieces compose left to right: steering agents in a ``Thinker`` submit
task records through topic-partitioned queues to a ``TaskServer``, which
executes them on a local pool or remote TCP workers; values above a size
threshold travel through an object store as small ``ProxyRef`` handles
instead of riding the control messages.
"""

from .errors import (
    AgentFailureError,
    BenchAbortedError,
    ConnectionLostError,
    CorruptionError,
    DecodeError,
    FrameError,
    IncompleteRecordError,
    LedgerError,
    MissingKeyError,
    QueueClosedError,
    SteerflowError,
    StoreError,
    StoreFullError,
    StoreUnreachableError,
    UnknownTopicError,
)
from .latency import LatencyBreakdown, compute_latencies
from .queues import InProcessQueues, QueueConfig
from .records import (
    ABSENT,
    FailureInfo,
    ProxyRef,
    ResourceSpec,
    ResultRecord,
    TaskState,
    TimestampLedger,
    decode_record,
    encode_record,
    mark_timestamp,
    new_task_request,
)
from .remote import RemoteExecutor
from .store import (
    FileDirStore,
    MemoryStoreClient,
    Resolver,
    StoreMetrics,
    ThresholdPolicy,
    apply_policy,
)
from .store_server import MemoryTcpStoreServer
from .taskserver import (
    LocalExecutor,
    MethodRegistration,
    StateCache,
    TaskServer,
    WorkerContext,
    execute_task,
)
from .tcp_queue import TcpServerQueues, TcpThinkerQueues
from .thinker import (
    AgentKind,
    AgentSpec,
    CoalescingEvent,
    ResourceCounter,
    Thinker,
    ThinkerContext,
)
from .worker import Worker

__version__ = "0.1.0"

__all__ = [
    "ABSENT",
    "AgentFailureError",
    "AgentKind",
    "AgentSpec",
    "BenchAbortedError",
    "CoalescingEvent",
    "ConnectionLostError",
    "CorruptionError",
    "DecodeError",
    "FailureInfo",
    "FileDirStore",
    "FrameError",
    "InProcessQueues",
    "IncompleteRecordError",
    "LatencyBreakdown",
    "LedgerError",
    "LocalExecutor",
    "MemoryStoreClient",
    "MemoryTcpStoreServer",
    "MethodRegistration",
    "MissingKeyError",
    "ProxyRef",
    "QueueClosedError",
    "QueueConfig",
    "RemoteExecutor",
    "Resolver",
    "ResourceCounter",
    "ResourceSpec",
    "ResultRecord",
    "StateCache",
    "SteerflowError",
    "StoreError",
    "StoreFullError",
    "StoreMetrics",
    "StoreUnreachableError",
    "TaskServer",
    "TaskState",
    "TcpServerQueues",
    "TcpThinkerQueues",
    "ThinkerContext",
    "ThresholdPolicy",
    "TimestampLedger",
    "UnknownTopicError",
    "Worker",
    "WorkerContext",
    "apply_policy",
    "compute_latencies",
    "decode_record",
    "encode_record",
    "execute_task",
    "mark_timestamp",
    "new_task_request",
    "Thinker",
]

"""Exception types shared across the engine."""


class SteerflowError(Exception):
    """Base class for engine errors."""


class LedgerError(SteerflowError, ValueError):
    """Bad timestamp operation: unknown field or double-set."""


class IncompleteRecordError(SteerflowError, ValueError):
    """A latency computation needs timestamps the record does not carry."""


class DecodeError(SteerflowError, ValueError):
    """Malformed record envelope.

    ``offset`` is the byte position where parsing failed, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (byte {offset})")
        self.offset = offset


class FrameError(SteerflowError):
    """Length-prefixed framing protocol violation (e.g. frame over the cap)."""


class ConnectionLostError(SteerflowError):
    """Peer went away mid-frame or mid-conversation."""


class QueueClosedError(SteerflowError):
    """Operation on a closed task queue."""


class UnknownTopicError(SteerflowError, KeyError):
    """Topic was not declared in the queue configuration."""


class StoreError(SteerflowError):
    """Base class for data-fabric store errors."""


class StoreUnreachableError(StoreError):
    """The object store cannot be contacted."""


class StoreFullError(StoreError):
    """The memory store refused a put that would exceed its capacity."""


class MissingKeyError(StoreError, KeyError):
    """The referenced key is not (or no longer) present in the store."""


class CorruptionError(StoreError):
    """Stored bytes do not match the reference's content hash."""


class AgentFailureError(SteerflowError):
    """An agent body raised; carries the agent name and original error."""

    def __init__(self, agent_name: str, cause: BaseException):
        super().__init__(f"agent '{agent_name}' failed: {cause!r}")
        self.agent_name = agent_name
        self.cause = cause


class BenchAbortedError(SteerflowError):
    """A benchmark run hit a failed task; carries a diagnostic report."""

    def __init__(self, message: str, diagnostic: dict):
        super().__init__(message)
        self.diagnostic = diagnostic

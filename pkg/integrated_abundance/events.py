"""Progress event subscription for long-running fits and studies."""

import asyncio
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProgressEvent:
    """Progress notification from a sampler chain or a study job."""

    source: str  # "chain" or "study"
    index: int  # chain number or job number
    completed: int  # iterations (chain) or jobs (study) done
    total: int
    log_density: Optional[float] = None
    message: Optional[str] = None

    @property
    def fraction(self) -> float:
        return self.completed / self.total if self.total else 1.0


ProgressCallback = Callable[[ProgressEvent], None]


class ProgressManager:
    """Manages progress subscriptions and distribution."""

    def __init__(self):
        self._subscribers: List[ProgressCallback] = []

    def subscribe(self, callback: ProgressCallback) -> None:
        """
        Subscribe to progress events.

        Args:
            callback: Function to call with ProgressEvent
        """
        if callback not in self._subscribers:
            self._subscribers.append(callback)

    def unsubscribe(self, callback: ProgressCallback) -> None:
        """
        Unsubscribe from progress events.

        Args:
            callback: Function to remove
        """
        if callback in self._subscribers:
            self._subscribers.remove(callback)

    def notify(self, event: ProgressEvent) -> None:
        """
        Notify all synchronous subscribers of an event.

        Args:
            event: ProgressEvent to distribute
        """
        for callback in self._subscribers:
            try:
                callback(event)
            except Exception as e:
                # Subscriber errors never interrupt sampling
                logger.error(f"[Progress] Error in subscriber: {e}")

    async def notify_async(self, event: ProgressEvent) -> None:
        """Notify subscribers, awaiting coroutine callbacks."""
        for callback in self._subscribers:
            try:
                if asyncio.iscoroutinefunction(callback):
                    await callback(event)
                else:
                    callback(event)
            except Exception as e:
                logger.error(f"[Progress] Error in subscriber: {e}")

    def clear(self) -> None:
        """Remove all subscribers."""
        self._subscribers.clear()

    def __len__(self) -> int:
        return len(self._subscribers)

"""Review-queue state: candidates, decisions, and the append-only log.

Decisions are persisted as one JSON record per line. The log is the only
mutable artifact; replaying it over the selection report reconstructs the
exact in-memory state, which is how the service recovers after a restart.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..selection import Candidate, load_selection_report

VALID_DECISIONS = ("failure", "clean")


class UnknownCandidateError(KeyError):
    pass


class InvalidRequestError(ValueError):
    pass


@dataclass(frozen=True)
class ServiceConfig:
    candidates_path: str
    log_path: str
    pyramid_roots: dict = field(default_factory=dict)  # layer -> directory
    opacity: float = 0.3
    listen_address: str = "127.0.0.1:8008"
    ui_root: str | None = None  # built frontend served at /ui when set

    def __post_init__(self):
        if not 0.0 <= self.opacity <= 1.0:
            raise InvalidRequestError(f"opacity {self.opacity} outside [0, 1]")


def load_service_config(path: str | Path) -> ServiceConfig:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    base = Path(path).parent

    def resolve(p):
        p = Path(p)
        return str(p if p.is_absolute() else base / p)

    return ServiceConfig(
        candidates_path=resolve(doc["candidates_path"]),
        log_path=resolve(doc["log_path"]),
        pyramid_roots={k: resolve(v) for k, v in doc.get("pyramid_roots", {}).items()},
        opacity=doc.get("opacity", 0.3),
        listen_address=doc.get("listen_address", "127.0.0.1:8008"),
        ui_root=resolve(doc["ui_root"]) if doc.get("ui_root") else None,
    )


@dataclass(frozen=True)
class DecisionRecord:
    candidate_id: str
    decision: str
    annotator: str
    timestamp: int  # UTC seconds
    revision: int

    def to_dict(self) -> dict:
        return {
            "candidate_id": self.candidate_id,
            "decision": self.decision,
            "annotator": self.annotator,
            "timestamp": self.timestamp,
            "revision": self.revision,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionRecord":
        return cls(
            candidate_id=d["candidate_id"],
            decision=d["decision"],
            annotator=d["annotator"],
            timestamp=d["timestamp"],
            revision=d["revision"],
        )


class ReviewState:
    """Candidates plus latest-revision-wins decisions, guarded by one lock.

    Writers serialize through record_decision; reads take a consistent
    snapshot, so a read after an acknowledged write always reflects it.
    """

    def __init__(self, candidates: list[Candidate], log_path: str | Path):
        self._lock = threading.Lock()
        self._base: dict[str, Candidate] = {c.chip_id: c for c in candidates}
        self._latest: dict[str, DecisionRecord] = {}
        self._revision = 0
        self._log_path = Path(log_path)
        if self._log_path.exists():
            for line in self._log_path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    self._apply(DecisionRecord.from_dict(json.loads(line)))

    @classmethod
    def load(cls, config: ServiceConfig) -> "ReviewState":
        return cls(load_selection_report(config.candidates_path), config.log_path)

    def _apply(self, record: DecisionRecord) -> None:
        current = self._latest.get(record.candidate_id)
        if current is None or record.revision >= current.revision:
            self._latest[record.candidate_id] = record
        self._revision = max(self._revision, record.revision)

    def _effective(self, cand: Candidate) -> Candidate:
        rec = self._latest.get(cand.chip_id)
        if rec is None:
            return cand
        return replace(cand, decision=rec.decision, annotation=None)

    def record_decision(
        self, candidate_id: str, decision: str, annotator: str
    ) -> DecisionRecord:
        """Append a decision; later revisions supersede earlier ones."""
        if decision not in VALID_DECISIONS:
            raise InvalidRequestError(
                f"decision must be one of {VALID_DECISIONS}, got {decision!r}"
            )
        with self._lock:
            if candidate_id not in self._base:
                raise UnknownCandidateError(candidate_id)
            record = DecisionRecord(
                candidate_id=candidate_id,
                decision=decision,
                annotator=annotator,
                timestamp=int(time.time()),
                revision=self._revision + 1,
            )
            self._log_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self._log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
            self._apply(record)
            return record

    def list_candidates(
        self,
        state: str | None = None,
        cell: str | None = None,
        offset: int = 0,
        limit: int = 50,
    ) -> tuple[list[Candidate], int]:
        """Filtered page ordered by descending entropy, then chip_id."""
        if state is not None and state not in ("pending", *VALID_DECISIONS):
            raise InvalidRequestError(f"unknown decision state {state!r}")
        if offset < 0 or limit < 0:
            raise InvalidRequestError("offset and limit must be >= 0")
        with self._lock:
            items = [self._effective(c) for c in self._base.values()]
        if state is not None:
            items = [c for c in items if c.decision == state]
        if cell is not None:
            items = [c for c in items if c.cell_id == cell]
        items.sort(key=lambda c: (-c.entropy, c.chip_id))
        return items[offset : offset + limit], len(items)

    def candidate(self, candidate_id: str) -> Candidate:
        with self._lock:
            if candidate_id not in self._base:
                raise UnknownCandidateError(candidate_id)
            return self._effective(self._base[candidate_id])

    def export_manifest(self) -> dict:
        """All latest-decision failures, ordered by chip_id."""
        with self._lock:
            items = [self._effective(c) for c in self._base.values()]
        rows = []
        for cand in sorted(items, key=lambda c: c.chip_id):
            if cand.decision != "failure":
                continue
            row = {"chip_id": cand.chip_id, "cell_id": cand.cell_id}
            if cand.rgb_path is not None:
                row["rgb_path"] = cand.rgb_path
            rows.append(row)
        return {"annotations": rows}

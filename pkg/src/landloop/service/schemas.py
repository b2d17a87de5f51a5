"""Pydantic request/response models for the review API."""

from __future__ import annotations

from pydantic import BaseModel


class CandidateOut(BaseModel):
    chip_id: str
    cell_id: str
    entropy: float
    decision: str
    source: str
    center_lon: float | None = None
    center_lat: float | None = None


class CandidatePage(BaseModel):
    total: int
    offset: int
    limit: int
    candidates: list[CandidateOut]


class DecisionIn(BaseModel):
    candidate_id: str
    decision: str
    annotator: str


class DecisionAck(BaseModel):
    candidate_id: str
    decision: str
    revision: int
    timestamp: int


class ErrorBody(BaseModel):
    code: str
    message: str

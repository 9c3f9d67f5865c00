"""Reward service for external RL trainers (HTTP or line-delimited stdio)."""
from __future__ import annotations

import asyncio
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Any, Optional, TextIO

from fastapi import FastAPI, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import __version__
from .egra import allocate, config_from_overrides
from .grpo import DEFAULT_EPSILON, DEFAULT_TOL, score_group
from .rewards import DEFAULT_BETA, DEFAULT_TAU, GroundTruth, RewardWeights, total_reward


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    weights: RewardWeights = field(default_factory=RewardWeights)
    beta: float = DEFAULT_BETA
    tau: float = DEFAULT_TAU
    epsilon: float = DEFAULT_EPSILON
    tol: float = DEFAULT_TOL
    max_batch_size: int = 1024
    request_timeout: float = 60.0

    def __post_init__(self):
        if self.max_batch_size < 1:
            raise ValueError("max_batch_size must be >= 1")
        if self.request_timeout <= 0:
            raise ValueError("request_timeout must be positive")


class ServiceError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def canonical_number(x: float) -> float | int:
    """Round to 9 significant digits; ints pass through unchanged."""
    if isinstance(x, bool) or isinstance(x, int):
        return x
    if not math.isfinite(x):
        raise ServiceError(500, f"non-finite number {x!r} in response")
    return float(f"{x:.9g}")


def canonicalize(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: canonicalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [canonicalize(v) for v in obj]
    if isinstance(obj, float):
        return canonical_number(obj)
    return obj


class _Body(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True)


class ScoreItem(_Body):
    response: str
    answers: list[str] = Field(min_length=1)
    evidence_pages: list[int] = []


class ScoreRequest(_Body):
    items: list[ScoreItem]


class GroupItem(_Body):
    responses: list[str] = Field(min_length=2)
    answers: list[str] = Field(min_length=1)
    evidence_pages: list[int] = []
    question_id: str = ""


class GroupRequest(_Body):
    groups: list[GroupItem]


class AllocateRequest(_Body):
    num_pages: int = Field(ge=1)
    evidence_pages: list[int] = []
    seed: int = Field(default=0, ge=0)
    config: dict[str, Any] = {}


def _ground_truth(answers, pages) -> GroundTruth:
    try:
        return GroundTruth(tuple(answers), frozenset(pages))
    except ValueError as exc:
        raise ServiceError(400, str(exc)) from None


def _check_breakdown(b) -> None:
    parts = (b.evidence, b.answer)
    if b.format not in (0, 1) or any(not 0.0 <= x <= 1.0 for x in parts):
        raise ServiceError(500, f"reward component out of range: {b}")


def handle_score(body: dict, cfg: ServiceConfig) -> dict:
    req = ScoreRequest.model_validate(body)
    if len(req.items) > cfg.max_batch_size:
        raise ServiceError(413, f"{len(req.items)} items exceeds max batch size {cfg.max_batch_size}")
    results = []
    for item in req.items:
        gt = _ground_truth(item.answers, item.evidence_pages)
        b = total_reward(item.response, gt, cfg.weights, cfg.beta, cfg.tau)
        _check_breakdown(b)
        results.append(b.to_dict())
    return {"results": results}


def handle_group(body: dict, cfg: ServiceConfig) -> dict:
    req = GroupRequest.model_validate(body)
    n = sum(len(g.responses) for g in req.groups)
    if n > cfg.max_batch_size:
        raise ServiceError(413, f"{n} responses exceeds max batch size {cfg.max_batch_size}")
    out = []
    for g in req.groups:
        gt = _ground_truth(g.answers, g.evidence_pages)
        group = score_group(g.responses, gt, cfg.weights, cfg.beta, cfg.tau,
                            cfg.epsilon, cfg.tol, g.question_id)
        for b in group.breakdowns:
            _check_breakdown(b)
        if not group.kept and any(a != 0.0 for a in group.advantages):
            raise ServiceError(500, "dropped group has non-zero advantages")
        out.append({"question_id": group.question_id, "rewards": list(group.rewards),
                    "advantages": list(group.advantages), "kept": group.kept,
                    "breakdowns": [b.to_dict() for b in group.breakdowns]})
    return {"groups": out}


def handle_allocate(body: dict, cfg: ServiceConfig) -> dict:
    req = AllocateRequest.model_validate(body)
    try:
        egra_cfg = config_from_overrides(req.config)
        plan = allocate(req.num_pages, req.evidence_pages, egra_cfg, req.seed)
    except (TypeError, ValueError) as exc:
        raise ServiceError(400, str(exc)) from None
    return plan.to_dict()


ROUTES = {
    "/v1/score": handle_score,
    "/v1/group": handle_group,
    "/v1/allocate": handle_allocate,
}


def dispatch(path: str, body: Any, cfg: ServiceConfig) -> tuple[int, dict]:
    """Run one request; returns (HTTP status, JSON body)."""
    if path == "/healthz":
        return 200, {"status": "ok", "version": __version__}
    handler = ROUTES.get(path)
    if handler is None:
        return 404, {"error": f"unknown endpoint {path}"}
    if not isinstance(body, dict):
        return 400, {"error": "request body must be a JSON object"}
    try:
        return 200, canonicalize(handler(body, cfg))
    except ValidationError as exc:
        return 400, {"error": "invalid request", "detail": json.loads(exc.json(include_url=False))}
    except ServiceError as exc:
        return exc.status, {"error": exc.message}
    except ValueError as exc:
        return 400, {"error": str(exc)}
    except Exception as exc:
        return 500, {"error": f"internal error: {type(exc).__name__}: {exc}"}


def create_app(cfg: Optional[ServiceConfig] = None):
    cfg = cfg or ServiceConfig()
    app = FastAPI(title="alr reward service", version=__version__)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "version": __version__}

    async def _run(path: str, request: Request) -> JSONResponse:
        try:
            body = json.loads(await request.body())
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            return JSONResponse({"error": f"malformed JSON body: {exc}"}, status_code=400)
        try:
            status, payload = await asyncio.wait_for(
                run_in_threadpool(dispatch, path, body, cfg), cfg.request_timeout)
        except asyncio.TimeoutError:
            return JSONResponse({"error": "request timed out"}, status_code=504)
        return JSONResponse(payload, status_code=status)

    def _endpoint(path: str):
        async def endpoint(request: Request):
            return await _run(path, request)
        return endpoint

    for path in ROUTES:
        app.add_api_route(path, _endpoint(path), methods=["POST"])
    return app


def serve(cfg: ServiceConfig) -> None:
    import uvicorn
    uvicorn.run(create_app(cfg), host=cfg.host, port=cfg.port, log_level="info")


def serve_stdio(cfg: ServiceConfig, stdin: TextIO = sys.stdin, stdout: TextIO = sys.stdout) -> None:
    """Line protocol: each input line is ``{"path": ..., "body": ...}``; each output line is
    ``{"status": ..., "body": ...}``."""
    for line in stdin:
        if not line.strip():
            continue
        try:
            req = json.loads(line)
            status, payload = dispatch(req.get("path", ""), req.get("body"), cfg)
        except (json.JSONDecodeError, AttributeError) as exc:
            status, payload = 400, {"error": f"malformed request line: {exc}"}
        stdout.write(json.dumps({"status": status, "body": payload}) + "\n")
        stdout.flush()

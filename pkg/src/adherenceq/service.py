"""HTTP and WebSocket service exposing live learning sessions, so a human can
play the decision-maker role against the online learner."""

from __future__ import annotations

import asyncio
import json
import secrets
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .adherence import AdherenceObservation, ProtocolViolationError, classify_action
from .experiments import EnvBundle, resolve_env
from .learner import (
    AdherenceLearner,
    LearnerConfig,
    learner_from_snapshot,
    snapshot_doc,
)
from .mdp import sample_transition

HISTORY_CSV_HEADER = "step,x,u_r,u_b,u_implemented,reward,x_next,observation,theta_hat"

SESSION_SNAPSHOT_FORMAT = "session-snapshot"
SESSION_SNAPSHOT_VERSION = 1


class CreateSessionBody(BaseModel):
    env: str | dict = "machine_replacement"
    seed: int = 0
    unconstrained_hdm: bool = False
    learner: dict = Field(default_factory=dict)
    discount: float = 0.9


class ActBody(BaseModel):
    # step echoes the round the client saw; a stale echo is a double submit
    step: int
    choice: str | None = None
    action: int | None = None


@dataclass
class LiveSession:
    id: str
    env_doc: str | dict
    bundle: EnvBundle
    learner: AdherenceLearner
    rng: np.random.Generator
    x: int
    u_r: int
    unconstrained: bool
    seed: int
    history: list[dict] = field(default_factory=list)
    created: float = field(default_factory=time.time)
    updated: float = field(default_factory=time.time)
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)
    watchers: set = field(default_factory=set)


def _theta_text(value: float) -> str:
    return format(value, ".12g")


def _labels(seq, n: int) -> list[str]:
    return list(seq) if seq is not None else [str(i) for i in range(n)]


def _state_payload(session: LiveSession) -> dict:
    mdp = session.bundle.mdp
    learner = session.learner
    x = session.x
    state_labels = _labels(mdp.state_labels, mdp.n_states)
    action_labels = _labels(mdp.action_labels, mdp.n_actions)
    theta = learner.theta_hat
    return {
        "id": session.id,
        "env": {
            "name": session.bundle.name,
            "n_states": mdp.n_states,
            "n_actions": mdp.n_actions,
            "state_labels": state_labels,
            "action_labels": action_labels,
            "x0": session.bundle.x0,
        },
        "x": x,
        "state_label": state_labels[x],
        "u_r": session.u_r,
        "u_b": session.bundle.baseline(x),
        "theta_hat": theta,
        "theta_hat_text": _theta_text(theta),
        "n": learner.adherence.n,
        "q_row": learner.q[x].tolist(),
        "admissible": [int(u) for u in learner.admissible_actions(x)],
        "step": learner.step,
        "initial_state_value": learner.mixed_value(session.bundle.x0),
        "reward_history": [row["reward"] for row in session.history],
        "pending": True,
        "unconstrained_hdm": session.unconstrained,
    }


def _history_csv(history: list[dict]) -> str:
    lines = [HISTORY_CSV_HEADER]
    for row in history:
        lines.append(
            f"{row['step']},{row['x']},{row['u_r']},{row['u_b']},{row['u_implemented']},"
            f"{float(row['reward'])!r},{row['x_next']},{row['observation']},"
            f"{float(row['theta_hat'])!r}"
        )
    return "\n".join(lines) + "\n"


def _session_doc(session: LiveSession) -> dict:
    return {
        "format": SESSION_SNAPSHOT_FORMAT,
        "version": SESSION_SNAPSHOT_VERSION,
        "id": session.id,
        "env": session.env_doc,
        "discount": session.bundle.mdp.discount,
        "seed": session.seed,
        "unconstrained_hdm": session.unconstrained,
        "x": session.x,
        "u_r": session.u_r,
        "rng_state": session.rng.bit_generator.state,
        "learner": snapshot_doc(session.learner),
        "history": session.history,
        "created": session.created,
        "updated": session.updated,
    }


def _session_from_doc(doc: dict) -> LiveSession:
    if doc.get("format") != SESSION_SNAPSHOT_FORMAT:
        raise ValueError(f"unsupported session snapshot format {doc.get('format')!r}")
    bundle = resolve_env(doc["env"], discount=float(doc["discount"]))
    learner = learner_from_snapshot(doc["learner"], bundle.mdp.action_mask)
    rng = np.random.default_rng()
    rng.bit_generator.state = doc["rng_state"]
    return LiveSession(
        id=doc["id"],
        env_doc=doc["env"],
        bundle=bundle,
        learner=learner,
        rng=rng,
        x=int(doc["x"]),
        u_r=int(doc["u_r"]),
        unconstrained=bool(doc["unconstrained_hdm"]),
        seed=int(doc["seed"]),
        history=list(doc["history"]),
        created=float(doc["created"]),
        updated=float(doc["updated"]),
    )


class SessionStore:
    """In-memory session registry with optional snapshot-file persistence."""

    def __init__(self, sessions_dir: str | Path | None = None):
        self.sessions: dict[str, LiveSession] = {}
        self.sessions_dir = Path(sessions_dir) if sessions_dir else None
        if self.sessions_dir:
            self.sessions_dir.mkdir(parents=True, exist_ok=True)

    def add(self, session: LiveSession) -> None:
        self.sessions[session.id] = session
        self.persist(session)

    def get(self, session_id: str) -> LiveSession | None:
        session = self.sessions.get(session_id)
        if session is None and self.sessions_dir:
            path = self.sessions_dir / f"{session_id}.json"
            if path.exists():
                session = _session_from_doc(json.loads(path.read_text()))
                self.sessions[session_id] = session
        return session

    def persist(self, session: LiveSession) -> None:
        if self.sessions_dir:
            path = self.sessions_dir / f"{session.id}.json"
            path.write_text(json.dumps(_session_doc(session)))


def create_app(
    sessions_dir: str | Path | None = None,
    static_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="adherenceq live sessions")
    store = SessionStore(sessions_dir)
    app.state.store = store

    def _get_or_404(session_id: str) -> LiveSession:
        session = store.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return session

    @app.get("/health")
    def health() -> dict:
        return {"ok": True}

    @app.post("/sessions", status_code=201)
    async def create_session(body: CreateSessionBody) -> dict:
        try:
            bundle = resolve_env(body.env, discount=body.discount)
            config_fields = dict(body.learner)
            config_fields.setdefault("discount", body.discount)
            config = LearnerConfig(baseline=bundle.baseline, **config_fields)
            learner = AdherenceLearner.for_mdp(bundle.mdp, config)
        except (ValueError, TypeError, KeyError, FileNotFoundError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        rng = np.random.default_rng(body.seed)
        session = LiveSession(
            id=secrets.token_hex(8),
            env_doc=body.env,
            bundle=bundle,
            learner=learner,
            rng=rng,
            x=bundle.x0,
            u_r=learner.recommend(bundle.x0, rng),
            unconstrained=body.unconstrained_hdm,
            seed=body.seed,
        )
        store.add(session)
        return {"id": session.id, "state": _state_payload(session)}

    @app.get("/sessions/{session_id}/state")
    async def get_state(session_id: str) -> dict:
        return _state_payload(_get_or_404(session_id))

    @app.post("/sessions/{session_id}/act")
    async def act(session_id: str, body: ActBody) -> dict:
        session = _get_or_404(session_id)
        async with session.lock:
            learner = session.learner
            mdp = session.bundle.mdp
            if body.step != learner.step:
                raise HTTPException(
                    status_code=409,
                    detail=f"round {body.step} already resolved (current round {learner.step})",
                )
            x = session.x
            u_b = session.bundle.baseline(x)
            if body.choice == "adhere":
                u = session.u_r
            elif body.choice == "baseline":
                u = u_b
            elif body.choice is None and body.action is not None:
                if not session.unconstrained:
                    raise HTTPException(
                        status_code=422,
                        detail="free-form actions need a session with unconstrained_hdm",
                    )
                u = int(body.action)
                if not mdp.is_admissible(x, u):
                    raise HTTPException(
                        status_code=422,
                        detail=f"action {u} is not admissible in state {x}",
                    )
            else:
                raise HTTPException(
                    status_code=422,
                    detail="provide choice 'adhere' or 'baseline', or a raw action",
                )
            x_next, reward = sample_transition(mdp, x, u, session.rng)
            try:
                obs = classify_action(u, session.u_r, u_b)
            except ProtocolViolationError:
                # unconstrained sessions tolerate exploration outside the two laws
                obs = AdherenceObservation.UNINFORMATIVE
            before = float(learner.q[x, u])
            learner.update(x, u, reward, x_next, obs)
            row = {
                "step": learner.step - 1,
                "x": x,
                "u_r": session.u_r,
                "u_b": u_b,
                "u_implemented": u,
                "reward": reward,
                "x_next": x_next,
                "observation": obs.value,
                "theta_hat": learner.theta_hat,
            }
            session.history.append(row)
            session.x = x_next
            session.u_r = learner.recommend(x_next, session.rng)
            session.updated = time.time()
            store.persist(session)
            response = {
                **row,
                "theta_hat_text": _theta_text(learner.theta_hat),
                "n": learner.adherence.n,
                "delta_q": {"x": x, "u": u, "before": before, "after": float(learner.q[x, u])},
                "state": _state_payload(session),
            }
        await _broadcast(session, {"type": "step", **response})
        return response

    @app.get("/sessions/{session_id}/history")
    async def history(session_id: str) -> PlainTextResponse:
        session = _get_or_404(session_id)
        return PlainTextResponse(_history_csv(session.history), media_type="text/csv")

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str):
        session = store.get(session_id)
        if session is None:
            await websocket.close(code=1008)
            return
        await websocket.accept()
        session.watchers.add(websocket)
        try:
            await websocket.send_json({"type": "state", **_state_payload(session)})
            while True:
                await websocket.receive_text()
        except WebSocketDisconnect:
            pass
        finally:
            session.watchers.discard(websocket)

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


async def _broadcast(session: LiveSession, message: dict) -> None:
    dead = []
    for websocket in session.watchers:
        try:
            await websocket.send_json(message)
        except Exception:
            dead.append(websocket)
    for websocket in dead:
        session.watchers.discard(websocket)

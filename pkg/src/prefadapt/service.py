"""Multi-profile preference service with event-sourced persistence.

Per-profile state is deliberately tiny: the raw base vector, the adaptation
config, and an append-only log of preference events. The current adapted
embedding is always exactly the fold of the update rule over that log
starting from the normalized base, so replay is both the recovery path and
the correctness anchor: what a restart reconstructs is bit-identical to
what the live process held.

Durability: each event is appended to the profile's JSONL log and fsynced
before it is acknowledged. A JSON snapshot of the current vector (float64
values survive JSON round-trips exactly) is written every few events so
recovery only replays the tail. Writes to one profile serialize behind a
per-profile lock; different profiles proceed in parallel; readers see the
pre- or post-event vector, never a torn one.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .dataio import EmbeddingTable, load_embeddings
from .errors import DomainError, IntegrityError, PrefAdaptError
from .prefcore import AdaptConfig, Embedding, adapt, normalize, rank_candidates

__all__ = [
    "PreferenceEvent",
    "Profile",
    "ProfileStore",
    "ServiceConfig",
    "UnknownProfile",
    "UnknownItem",
    "DuplicateProfile",
    "replay",
    "load_service_config",
    "build_app",
    "run_server",
]

_PROFILE_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]{0,63}$")


class UnknownProfile(PrefAdaptError):
    def __init__(self, profile_id: str):
        super().__init__(f"unknown profile {profile_id!r}")
        self.profile_id = profile_id


class UnknownItem(PrefAdaptError):
    """One or more item ids do not resolve in the loaded corpus."""

    def __init__(self, unknown_ids: Sequence[str]):
        super().__init__(f"unknown ids: {', '.join(map(repr, unknown_ids))}")
        self.unknown_ids = list(unknown_ids)


class DuplicateProfile(PrefAdaptError):
    def __init__(self, profile_id: str):
        super().__init__(f"profile {profile_id!r} already exists")
        self.profile_id = profile_id


@dataclass(frozen=True)
class PreferenceEvent:
    """One acknowledged winner-over-loser observation."""

    seq: int
    winner_id: str
    loser_id: str
    timestamp: float


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def replay(
    base, events: Sequence[PreferenceEvent], config: AdaptConfig, table: EmbeddingTable
) -> Embedding:
    """Fold the adaptation over an event log from the raw base vector.

    Events must carry contiguous sequence numbers starting at 1; a gap or
    disorder means the log is not the one that produced the profile.
    """
    current = normalize(base, "base")
    for position, event in enumerate(events, start=1):
        if event.seq != position:
            raise IntegrityError(
                f"event log broken at position {position}: seq {event.seq}"
            )
        pair = table.pair(event.winner_id, event.loser_id)
        current, _ = adapt(current, [pair], config)
    return current


@dataclass
class Profile:
    """In-memory profile state plus its open log handle."""

    profile_id: str
    base: np.ndarray
    base_unit: np.ndarray
    current: Embedding
    config: AdaptConfig
    created_at: str
    updated_at: str
    events: list[PreferenceEvent] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    log_handle: object = None

    def drift_cosine(self) -> float:
        values = self.current.values
        return float(values @ self.base_unit / np.linalg.norm(values))

    def summary(self) -> dict:
        return {
            "profile_id": self.profile_id,
            "dim": self.current.dim,
            "event_count": len(self.events),
            "drift_cosine": self.drift_cosine(),
            "current": [float(v) for v in self.current.values],
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }


def _atomic_write_json(path: Path, payload: dict) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _config_to_dict(config: AdaptConfig) -> dict:
    return {
        "epsilon": config.epsilon,
        "steps": config.steps,
        "temperature": config.temperature,
        "renormalize": config.renormalize,
    }


def _config_from_dict(raw: dict) -> AdaptConfig:
    return AdaptConfig(
        epsilon=float(raw["epsilon"]),
        steps=int(raw["steps"]),
        temperature=float(raw["temperature"]),
        renormalize=bool(raw["renormalize"]),
    )


class ProfileStore:
    """Creates, persists, recovers, and serves preference profiles."""

    def __init__(
        self,
        table: EmbeddingTable,
        data_dir,
        default_config: AdaptConfig | None = None,
        snapshot_interval: int = 16,
    ):
        if snapshot_interval < 1:
            raise DomainError("snapshot_interval must be >= 1")
        self.table = table
        self.default_config = default_config or AdaptConfig()
        self.snapshot_interval = snapshot_interval
        self.profiles_dir = Path(data_dir) / "profiles"
        self.profiles_dir.mkdir(parents=True, exist_ok=True)
        self._profiles: dict[str, Profile] = {}
        self._lock = threading.Lock()
        self._recover_all()

    # -- lifecycle -----------------------------------------------------

    def close(self) -> None:
        with self._lock:
            for profile in self._profiles.values():
                with profile.lock:
                    self._write_snapshot(profile)
                    if profile.log_handle is not None:
                        profile.log_handle.close()
                        profile.log_handle = None

    def _profile_dir(self, profile_id: str) -> Path:
        return self.profiles_dir / profile_id

    def _recover_all(self) -> None:
        for entry in sorted(self.profiles_dir.iterdir()):
            if entry.is_dir() and (entry / "profile.json").exists():
                profile = self._recover_one(entry)
                self._profiles[profile.profile_id] = profile

    def _recover_one(self, profile_dir: Path) -> Profile:
        with open(profile_dir / "profile.json", encoding="utf-8") as fh:
            manifest = json.load(fh)
        base = np.asarray(manifest["base"], dtype=np.float64)
        config = _config_from_dict(manifest["config"])
        events = self._read_events(profile_dir / "events.jsonl")

        snapshot = self._read_snapshot(profile_dir / "snapshot.json")
        if snapshot is not None:
            snap_seq, snap_values = snapshot
            if snap_seq > len(events):
                raise IntegrityError(
                    f"{profile_dir.name}: snapshot at seq {snap_seq} is ahead of "
                    f"the {len(events)}-event log"
                )
            for position, event in enumerate(events, start=1):
                if event.seq != position:
                    raise IntegrityError(
                        f"{profile_dir.name}: event log broken at position "
                        f"{position}: seq {event.seq}"
                    )
            current = Embedding(snap_values)
            for event in events[snap_seq:]:
                pair = self.table.pair(event.winner_id, event.loser_id)
                current, _ = adapt(current, [pair], config)
        else:
            current = replay(base, events, config, self.table)

        profile = Profile(
            profile_id=manifest["profile_id"],
            base=base,
            base_unit=normalize(base, "base").values,
            current=current,
            config=config,
            created_at=manifest["created_at"],
            updated_at=manifest.get("updated_at", manifest["created_at"]),
            events=events,
        )
        profile.log_handle = open(
            profile_dir / "events.jsonl", "a", encoding="utf-8"
        )
        return profile

    def _read_events(self, path: Path) -> list[PreferenceEvent]:
        if not path.exists():
            return []
        raw = path.read_bytes()
        text = raw.decode("utf-8")
        complete, sep, torn = text.rpartition("\n")
        if torn:
            # A crash can leave an unacknowledged partial record at the
            # tail; cut it off so the log stays appendable.
            with open(path, "r+b") as fh:
                fh.truncate(len(raw) - len(torn.encode("utf-8")))
        events = []
        for lineno, line in enumerate(complete.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                events.append(
                    PreferenceEvent(
                        seq=int(record["seq"]),
                        winner_id=str(record["winner_id"]),
                        loser_id=str(record["loser_id"]),
                        timestamp=float(record["timestamp"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                raise IntegrityError(f"{path}: unreadable event at line {lineno}") from None
        return events

    def _read_snapshot(self, path: Path) -> tuple[int, np.ndarray] | None:
        if not path.exists():
            return None
        try:
            with open(path, encoding="utf-8") as fh:
                record = json.load(fh)
            seq = int(record["seq"])
            values = np.asarray(record["current"], dtype=np.float64)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            raise IntegrityError(f"{path}: unreadable snapshot") from None
        if values.ndim != 1 or values.size != self.table.dim:
            raise IntegrityError(f"{path}: snapshot dimension mismatch")
        return seq, values

    def _write_snapshot(self, profile: Profile) -> None:
        _atomic_write_json(
            self._profile_dir(profile.profile_id) / "snapshot.json",
            {
                "seq": len(profile.events),
                "current": [float(v) for v in profile.current.values],
            },
        )

    # -- operations ----------------------------------------------------

    def create_profile(
        self,
        base_id: str | None = None,
        base_vector=None,
        config: AdaptConfig | None = None,
        profile_id: str | None = None,
    ) -> str:
        if (base_id is None) == (base_vector is None):
            raise DomainError("provide exactly one of base_id or base_vector")
        if base_id is not None:
            if not self.table.has_id(base_id):
                raise UnknownItem([base_id])
            base = self.table.vector(base_id).copy()
        else:
            base = np.asarray(base_vector, dtype=np.float64)
            if base.ndim != 1 or base.size != self.table.dim:
                raise DomainError(
                    f"base vector must have dimension {self.table.dim}, "
                    f"got shape {base.shape}"
                )
        config = config or self.default_config
        current = normalize(base, "base")

        with self._lock:
            if profile_id is not None:
                if not _PROFILE_ID_RE.match(profile_id):
                    raise DomainError(
                        f"profile id {profile_id!r} must match {_PROFILE_ID_RE.pattern}"
                    )
                if profile_id in self._profiles:
                    raise DuplicateProfile(profile_id)
            else:
                profile_id = uuid.uuid4().hex[:12]
                while profile_id in self._profiles:
                    profile_id = uuid.uuid4().hex[:12]

            now = _utcnow()
            profile_dir = self._profile_dir(profile_id)
            profile_dir.mkdir(parents=True, exist_ok=True)
            _atomic_write_json(
                profile_dir / "profile.json",
                {
                    "profile_id": profile_id,
                    "created_at": now,
                    "base": [float(v) for v in base],
                    "config": _config_to_dict(config),
                },
            )
            profile = Profile(
                profile_id=profile_id,
                base=base,
                base_unit=current.values,
                current=current,
                config=config,
                created_at=now,
                updated_at=now,
            )
            profile.log_handle = open(
                profile_dir / "events.jsonl", "a", encoding="utf-8"
            )
            self._profiles[profile_id] = profile
        return profile_id

    def _get(self, profile_id: str) -> Profile:
        profile = self._profiles.get(profile_id)
        if profile is None:
            raise UnknownProfile(profile_id)
        return profile

    def get_profile(self, profile_id: str) -> dict:
        return self._get(profile_id).summary()

    def profile_ids(self) -> list[str]:
        return sorted(self._profiles)

    def record_preference(
        self, profile_id: str, winner_id: str, loser_id: str
    ) -> tuple[int, float]:
        profile = self._get(profile_id)
        unknown = [i for i in (winner_id, loser_id) if not self.table.has_id(i)]
        if unknown:
            raise UnknownItem(unknown)
        if winner_id == loser_id:
            raise DomainError(f"self-pair: winner and loser are both {winner_id!r}")
        with profile.lock:
            seq = len(profile.events) + 1
            event = PreferenceEvent(
                seq=seq, winner_id=winner_id, loser_id=loser_id, timestamp=time.time()
            )
            line = json.dumps(
                {
                    "seq": event.seq,
                    "winner_id": event.winner_id,
                    "loser_id": event.loser_id,
                    "timestamp": event.timestamp,
                }
            )
            handle = profile.log_handle
            handle.write(line + "\n")
            handle.flush()
            os.fsync(handle.fileno())

            pair = self.table.pair(winner_id, loser_id)
            profile.current, _ = adapt(profile.current, [pair], profile.config)
            profile.events.append(event)
            profile.updated_at = _utcnow()
            if seq % self.snapshot_interval == 0:
                self._write_snapshot(profile)
            return seq, profile.drift_cosine()

    def rank(
        self, profile_id: str, candidate_ids: Sequence[str] | None, k: int
    ) -> list[tuple[str, float]]:
        profile = self._get(profile_id)
        if k < 1:
            raise DomainError(f"k must be >= 1, got {k}")
        ids = list(candidate_ids) if candidate_ids is not None else list(self.table.ids)
        unknown = [i for i in ids if not self.table.has_id(i)]
        if unknown:
            raise UnknownItem(unknown)
        candidates = [(rid, self.table.embedding(rid)) for rid in ids]
        return rank_candidates(profile.current, candidates)[:k]

    def replay_profile(self, profile_id: str) -> Embedding:
        """Recompute a profile's current vector from base and log alone."""
        profile = self._get(profile_id)
        return replay(profile.base, profile.events, profile.config, self.table)


# -- configuration -----------------------------------------------------

@dataclass(frozen=True)
class ServiceConfig:
    listen: str = "127.0.0.1:8787"
    matrix_path: str | None = None
    meta_path: str | None = None
    data_dir: str = "prefadapt-data"
    adapt: AdaptConfig = AdaptConfig()
    snapshot_interval: int = 16


_ENV_PREFIX = "PREFADAPT_"


def _env_bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


def load_service_config(path=None, env=None) -> ServiceConfig:
    """Service configuration with precedence env > file > defaults.

    The file is JSON with keys listen, matrix_path, meta_path, data_dir,
    epsilon, steps, temperature, renormalize, snapshot_interval. Environment
    variables use the PREFADAPT_ prefix and upper-cased key names.
    """
    env = os.environ if env is None else env
    values: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise DomainError(f"{path}: config must be a JSON object")
        known = {
            "listen", "matrix_path", "meta_path", "data_dir",
            "epsilon", "steps", "temperature", "renormalize",
            "snapshot_interval",
        }
        unknown = set(raw) - known
        if unknown:
            raise DomainError(f"{path}: unknown config keys {sorted(unknown)}")
        values.update(raw)

    for key in ("listen", "matrix_path", "meta_path", "data_dir"):
        text = env.get(_ENV_PREFIX + key.upper())
        if text is not None:
            values[key] = text
    for key, cast in (
        ("epsilon", float),
        ("steps", int),
        ("temperature", float),
        ("snapshot_interval", int),
    ):
        text = env.get(_ENV_PREFIX + key.upper())
        if text is not None:
            values[key] = cast(text)
    text = env.get(_ENV_PREFIX + "RENORMALIZE")
    if text is not None:
        values["renormalize"] = _env_bool(text)

    defaults = AdaptConfig()
    adapt_config = AdaptConfig(
        epsilon=float(values.get("epsilon", defaults.epsilon)),
        steps=int(values.get("steps", defaults.steps)),
        temperature=float(values.get("temperature", defaults.temperature)),
        renormalize=bool(values.get("renormalize", defaults.renormalize)),
    )
    base = ServiceConfig()
    return ServiceConfig(
        listen=str(values.get("listen", base.listen)),
        matrix_path=values.get("matrix_path", base.matrix_path),
        meta_path=values.get("meta_path", base.meta_path),
        data_dir=str(values.get("data_dir", base.data_dir)),
        adapt=adapt_config,
        snapshot_interval=int(values.get("snapshot_interval", base.snapshot_interval)),
    )


# -- HTTP layer --------------------------------------------------------

class AdaptConfigPatch(BaseModel):
    epsilon: float | None = None
    steps: int | None = None
    temperature: float | None = None
    renormalize: bool | None = None


class CreateProfileRequest(BaseModel):
    base_id: str | None = None
    base_vector: list[float] | None = None
    config: AdaptConfigPatch | None = None
    profile_id: str | None = None


class EventRequest(BaseModel):
    winner_id: str
    loser_id: str


class RankRequest(BaseModel):
    candidate_ids: list[str] | None = None
    k: int


def build_app(store: ProfileStore) -> FastAPI:
    """FastAPI application wrapping a profile store.

    Error bodies are always {error_code, message, details}: 404 for unknown
    profiles/ids, 422 for self-pairs, dimension mismatches and malformed
    requests, 409 for duplicate profile ids.
    """
    app = FastAPI(title="prefadapt service", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def error_response(status: int, code: str, message: str, details=None):
        return JSONResponse(
            status_code=status,
            content={"error_code": code, "message": message, "details": details or {}},
        )

    @app.exception_handler(UnknownProfile)
    async def _unknown_profile(request: Request, exc: UnknownProfile):
        return error_response(404, "not_found", str(exc), {"profile_id": exc.profile_id})

    @app.exception_handler(UnknownItem)
    async def _unknown_item(request: Request, exc: UnknownItem):
        return error_response(404, "not_found", str(exc), {"unknown_ids": exc.unknown_ids})

    @app.exception_handler(DuplicateProfile)
    async def _duplicate(request: Request, exc: DuplicateProfile):
        return error_response(409, "duplicate_profile", str(exc), {"profile_id": exc.profile_id})

    @app.exception_handler(DomainError)
    async def _domain(request: Request, exc: DomainError):
        return error_response(422, "invalid_request", str(exc))

    @app.exception_handler(IntegrityError)
    async def _integrity(request: Request, exc: IntegrityError):
        return error_response(500, "integrity_error", str(exc))

    @app.exception_handler(RequestValidationError)
    async def _request_validation(request: Request, exc: RequestValidationError):
        return error_response(
            422, "invalid_request", "request body failed validation",
            {"errors": exc.errors()},
        )

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "profiles": len(store.profile_ids())}

    @app.post("/profiles", status_code=201)
    def create_profile(request: CreateProfileRequest):
        config = None
        if request.config is not None:
            patch = {
                key: value
                for key, value in request.config.model_dump().items()
                if value is not None
            }
            config = replace(store.default_config, **patch)
        profile_id = store.create_profile(
            base_id=request.base_id,
            base_vector=request.base_vector,
            config=config,
            profile_id=request.profile_id,
        )
        return {"profile_id": profile_id}

    @app.get("/profiles/{profile_id}")
    def get_profile(profile_id: str):
        return store.get_profile(profile_id)

    @app.post("/profiles/{profile_id}/events")
    def record_event(profile_id: str, request: EventRequest):
        seq, drift = store.record_preference(
            profile_id, request.winner_id, request.loser_id
        )
        return {"seq": seq, "drift_cosine": drift}

    @app.post("/profiles/{profile_id}/rank")
    def rank(profile_id: str, request: RankRequest):
        ranking = store.rank(profile_id, request.candidate_ids, request.k)
        return {
            "ranking": [{"id": rid, "score": score} for rid, score in ranking]
        }

    return app


def run_server(config: ServiceConfig):
    """Load the corpus, recover profiles, and serve until signaled."""
    import uvicorn

    if not config.matrix_path or not config.meta_path:
        raise DomainError("matrix_path and meta_path are required to serve")
    table = load_embeddings(config.matrix_path, config.meta_path)
    store = ProfileStore(
        table,
        config.data_dir,
        default_config=config.adapt,
        snapshot_interval=config.snapshot_interval,
    )
    app = build_app(store)
    host, _, port_text = config.listen.rpartition(":")
    if not host or not port_text.isdigit():
        raise DomainError(f"listen must be host:port, got {config.listen!r}")
    try:
        uvicorn.run(app, host=host, port=int(port_text), log_level="warning")
    finally:
        store.close()

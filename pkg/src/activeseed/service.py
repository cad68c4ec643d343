"""HTTP session service: queries from the engine, labels from a human.

A session wraps one active-learning run. The service asks for labels in
rounds (GET /queries), ingests them (POST /labels), and exposes the live
learning curve (GET /state) so the labeler sees the effect of each answer.
Every mutation appends to an on-disk transcript; restoring a session means
replaying its transcript through a fresh run, so checkpoints stay valid
across restarts without pickling any model state.

All mutations of one session are serialized behind its lock; sessions are
independent of each other.
"""

from __future__ import annotations

import logging
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import corpus
from . import jsonio
from .data import DataError, Dataset, stratified_kfold, zscore_normalize
from .mixture import ViConfig
from .pal import STRATEGIES, AlConfig, PalRun

__all__ = ["SessionParams", "Session", "SessionStore", "create_app"]

log = logging.getLogger("activeseed.service")

# points of pool context shipped with each scatter render
_SCATTER_POOL_CAP = 250

# sessions get a lighter mixture fit than batch runs; creation is
# interactive and the refinement step reruns it every round
_SESSION_VI = ViConfig(j_max=8, n_restarts=2)


class CreateSessionBody(BaseModel):
    dataset: str
    strategy: str = "4ds"
    kernel: str = "rwm"
    budget: int
    k: int | None = None
    seed: int = 0


class LabelsBody(BaseModel):
    labels: dict[str, int]


@dataclass(frozen=True)
class SessionParams:
    """Everything needed to rebuild a session from scratch."""

    dataset: str
    strategy: str
    kernel: str
    budget: int
    k: int | None
    seed: int

    def to_json(self) -> dict:
        return {
            "dataset": self.dataset,
            "strategy": self.strategy,
            "kernel": self.kernel,
            "budget": self.budget,
            "k": self.k,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SessionParams":
        return cls(
            dataset=obj["dataset"],
            strategy=obj["strategy"],
            kernel=obj["kernel"],
            budget=int(obj["budget"]),
            k=None if obj.get("k") is None else int(obj["k"]),
            seed=int(obj.get("seed", 0)),
        )


def _render_kind(d: Dataset) -> str:
    if d.name.startswith("mnist"):
        return "image"
    if d.schema.d_cont == 2 and not d.schema.cat_sizes:
        return "scatter2d"
    return "table"


@dataclass
class Session:
    """One labeling run plus the raw dataset it renders from."""

    id: str
    params: SessionParams
    raw: Dataset
    run: PalRun
    steps: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def render_kind(self) -> str:
        return _render_kind(self.raw)

    def _features(self, sample_id: int) -> list:
        row: list = [float(v) for v in self.raw.cont[sample_id]]
        codes = None
        if self.raw.schema.cat_sizes:
            codes = self.raw.block([sample_id]).cat_codes[0]
            for attr, code in zip(self.raw.schema.categorical, codes):
                row.append(attr.categories[int(code)])
        return row

    def _render(self, sample_id: int, rng: np.random.Generator) -> dict:
        kind = self.render_kind
        if kind == "scatter2d":
            run = self.run
            pool_ids = run.train.ids[run.pool_pos]
            if len(pool_ids) > _SCATTER_POOL_CAP:
                pool_ids = rng.choice(pool_ids, _SCATTER_POOL_CAP, replace=False)
            labeled_ids = run.train.ids[run.labeled_pos]
            payload = {
                "point": [float(v) for v in self.raw.cont[sample_id]],
                "pool": self.raw.cont[np.sort(pool_ids)].tolist(),
                "labeled": [
                    {"xy": self.raw.cont[int(i)].tolist(), "label": int(y)}
                    for i, y in zip(labeled_ids, run.labeled_y)
                ],
            }
        elif kind == "image":
            pixels = self.raw.cont[sample_id]
            side = int(round(float(np.sqrt(len(pixels)))))
            payload = {
                "width": side,
                "height": side,
                "pixels": [int(round(float(v))) for v in pixels],
            }
        else:
            names = [a.name for a in self.raw.schema.attributes]
            values = self.raw.decode_row(sample_id)[:-1]
            payload = {"rows": [[n, v] for n, v in zip(names, values)]}
        return {"kind": kind, "payload": payload}

    def queries_view(self) -> dict:
        rng = np.random.default_rng([self.params.seed, self.run.round])
        samples = [
            {
                "id": int(i),
                "features": self._features(int(i)),
                "render": self._render(int(i), rng),
            }
            for i in self.run.pending
        ]
        return {"round": self.run.round, "done": self.run.done, "samples": samples}

    def state_view(self) -> dict:
        run = self.run
        curve = [
            {"n": n, "test_acc": acc}
            for n, acc in run.record.curve
        ]
        w = run.weights
        return {
            "dataset": self.params.dataset,
            "strategy": self.params.strategy,
            "kernel": self.params.kernel,
            "labeled_count": int(len(run.labeled_pos)),
            "budget": run.cfg.budget,
            "round": run.round,
            "done": run.done,
            "learning_curve": curve,
            "weights_4ds": [w.w_dist, w.w_dens, w.w_distr],
            "class_names": list(self.raw.schema.class_names),
        }


def _build_run(params: SessionParams, raw: Dataset) -> PalRun:
    normalized = zscore_normalize(raw)
    split = stratified_kfold(normalized, 5, params.seed)[0]
    cfg = AlConfig(
        budget=params.budget,
        strategy=params.strategy,
        kernel=params.kernel,
        query_size=params.k,
        seed=params.seed,
        vi=_SESSION_VI,
    )
    return PalRun(
        normalized.block(split.pool_ids),
        cfg,
        normalized.schema.n_classes,
        test=normalized.block(split.test_ids),
    )


class SessionStore:
    """Sessions by id, with transcript persistence and replay restore."""

    def __init__(self, load_dataset, checkpoint_dir=None):
        self._load_dataset = load_dataset
        self._dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        if self._dir is not None:
            self._dir.mkdir(parents=True, exist_ok=True)
            self._restore_all()

    def create(self, params: SessionParams) -> Session:
        raw = self._load_dataset(params.dataset)
        session = Session(
            id=uuid.uuid4().hex[:12],
            params=params,
            raw=raw,
            run=_build_run(params, raw),
        )
        with self._lock:
            self._sessions[session.id] = session
        self._checkpoint(session)
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise KeyError(session_id)
        return session

    def ids(self) -> list[str]:
        with self._lock:
            return sorted(self._sessions)

    def provide(self, session: Session, by_id: dict[int, int]) -> dict:
        """Apply one round of labels; the ids must cover the pending set
        exactly. Returns the /labels response body."""
        with session.lock:
            run = session.run
            if run.done:
                raise ValueError("session already reached its budget")
            pending = [int(i) for i in run.pending]
            missing = sorted(set(pending) - set(by_id))
            extra = sorted(set(by_id) - set(pending))
            if missing or extra:
                raise ValueError(
                    f"labels must cover the pending ids exactly; "
                    f"missing {missing}, unexpected {extra}"
                )
            labels = [by_id[i] for i in pending]
            run.provide(labels)
            session.steps.append({"ids": pending, "labels": labels})
            self._checkpoint(session)
            return {"accepted": len(labels), "next_round": run.round}

    def _checkpoint(self, session: Session) -> None:
        if self._dir is None:
            return
        doc = {
            "session_id": session.id,
            "params": session.params.to_json(),
            "steps": session.steps,
        }
        path = self._dir / f"{session.id}.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(jsonio.dumps(doc, indent=2) + "\n", encoding="utf-8")
        tmp.replace(path)

    def _restore_all(self) -> None:
        for path in sorted(self._dir.glob("*.json")):
            try:
                self._restore(path)
            except Exception as e:  # noqa: BLE001 - a bad file must not block startup
                log.warning("skipping checkpoint %s: %s", path.name, e)

    def _restore(self, path: Path) -> None:
        doc = jsonio.loads(path.read_text(encoding="utf-8"))
        params = SessionParams.from_json(doc["params"])
        raw = self._load_dataset(params.dataset)
        session = Session(
            id=doc["session_id"],
            params=params,
            raw=raw,
            run=_build_run(params, raw),
        )
        for step in doc["steps"]:
            pending = [int(i) for i in session.run.pending]
            if pending != [int(i) for i in step["ids"]]:
                raise DataError("transcript does not match the replayed run")
            session.run.provide([int(v) for v in step["labels"]])
            session.steps.append(
                {"ids": pending, "labels": [int(v) for v in step["labels"]]}
            )
        with self._lock:
            self._sessions[session.id] = session


def default_roster() -> dict:
    """Dataset loaders by name: the bundled corpus, plus the digit images
    when their files are present."""
    roster = {name: (lambda n=name: corpus.builtin(n)) for name in corpus.available()}

    def load_mnist():
        return corpus.mnist(train=True, limit=2000)

    try:
        load_mnist()
        roster["mnist"] = load_mnist
    except DataError:
        pass
    return roster


def create_app(
    roster: dict | None = None,
    checkpoint_dir=None,
    static_dir=None,
) -> FastAPI:
    """Assemble the service. `roster` maps dataset names to zero-argument
    loaders returning raw (unnormalized) datasets."""
    roster = roster if roster is not None else default_roster()

    def load_dataset(name: str) -> Dataset:
        loader = roster.get(name)
        if loader is None:
            raise KeyError(name)
        return loader()

    store = SessionStore(load_dataset, checkpoint_dir=checkpoint_dir)
    app = FastAPI(title="activeseed", docs_url=None, redoc_url=None)
    app.state.store = store

    @app.get("/datasets")
    def list_datasets() -> dict:
        items = []
        for name in sorted(roster):
            try:
                d = roster[name]()
            except DataError:
                continue
            items.append(
                {
                    "name": name,
                    "n_samples": len(d),
                    "n_classes": d.schema.n_classes,
                    "d_cont": d.schema.d_cont,
                    "n_categorical": len(d.schema.cat_sizes),
                    "class_names": list(d.schema.class_names),
                    "render": _render_kind(d),
                }
            )
        return {"datasets": items}

    @app.post("/sessions")
    def create_session(body: CreateSessionBody) -> dict:
        if body.dataset not in roster:
            raise HTTPException(404, f"unknown dataset {body.dataset!r}")
        if body.strategy not in STRATEGIES:
            raise HTTPException(400, f"unknown strategy {body.strategy!r}")
        params = SessionParams(
            dataset=body.dataset,
            strategy=body.strategy,
            kernel=body.kernel,
            budget=body.budget,
            k=body.k,
            seed=body.seed,
        )
        try:
            session = store.create(params)
        except (ValueError, DataError) as e:
            raise HTTPException(400, str(e)) from None
        return {"session_id": session.id}

    def get_session(session_id: str) -> Session:
        try:
            return store.get(session_id)
        except KeyError:
            raise HTTPException(404, f"no session {session_id!r}") from None

    # reads take the session lock too: a poll landing mid-mutation must
    # get a consistent snapshot, not a half-advanced round
    @app.get("/sessions/{session_id}/queries")
    def session_queries(session_id: str) -> dict:
        session = get_session(session_id)
        with session.lock:
            return session.queries_view()

    @app.post("/sessions/{session_id}/labels")
    def session_labels(session_id: str, body: LabelsBody) -> dict:
        session = get_session(session_id)
        try:
            by_id = {int(k): int(v) for k, v in body.labels.items()}
        except ValueError:
            raise HTTPException(400, "sample ids must be integers") from None
        try:
            return store.provide(session, by_id)
        except ValueError as e:
            raise HTTPException(400, str(e)) from None

    @app.get("/sessions/{session_id}/state")
    def session_state(session_id: str) -> dict:
        session = get_session(session_id)
        with session.lock:
            return session.state_view()

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True))
    return app

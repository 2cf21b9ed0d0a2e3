"""HTTP annotation service with a crash-safe append-only log.

All mutations (assignments and verdicts) are length-prefixed, checksummed
frames appended to one log file and fsynced before the caller sees an ack,
so a crash at any byte boundary loses at most the in-flight record. Replay
of the log fully reconstructs service state; the leaderboard is a pure
function of the verdict log plus the filter, cached until a new verdict
lands.
"""

from __future__ import annotations

import io
import json
import os
import struct
import threading
import zlib
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Union

from pydantic import BaseModel

from . import arena, errors
from .arena import Battle, Outcome, Verdict
from .seeding import substream

_FRAME_HEADER = struct.Struct("<II")  # payload length, crc32

CHOICE_LEFT = "Left"
CHOICE_RIGHT = "Right"
CHOICE_TIE = "Tie"
CHOICE_BOTH_BAD = "BothBad"
CHOICES = (CHOICE_LEFT, CHOICE_RIGHT, CHOICE_TIE, CHOICE_BOTH_BAD)


class Exhausted:
    """Sentinel: the annotator has judged or been assigned every battle."""

    def __repr__(self):
        return "Exhausted"


EXHAUSTED = Exhausted()


class AppendLog:
    """Single-writer append-only record log with checksummed frames."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.records: list[dict] = []
        self._next_seq = 1
        self._recover()
        self._fh = open(self.path, "ab")

    def _recover(self) -> None:
        if not self.path.exists():
            self.path.touch()
            return
        good_end = 0
        data = self.path.read_bytes()
        pos = 0
        while pos + _FRAME_HEADER.size <= len(data):
            length, crc = _FRAME_HEADER.unpack_from(data, pos)
            start = pos + _FRAME_HEADER.size
            end = start + length
            if end > len(data):
                break
            payload = data[start:end]
            if zlib.crc32(payload) != crc:
                break
            record = json.loads(payload.decode("utf-8"))
            if record.get("seq") != self._next_seq:
                raise errors.StorageFailure(
                    f"log sequence gap: expected {self._next_seq}, got {record.get('seq')}")
            self.records.append(record)
            self._next_seq += 1
            good_end = end
            pos = end
        if good_end < len(data):
            # partial tail frame from a crash mid-append: drop it
            with open(self.path, "r+b") as fh:
                fh.truncate(good_end)

    def append(self, record: dict) -> int:
        """Durably append one record; returns its sequence number."""
        seq = self._next_seq
        payload = json.dumps({**record, "seq": seq}, sort_keys=True).encode("utf-8")
        frame = _FRAME_HEADER.pack(len(payload), zlib.crc32(payload)) + payload
        try:
            self._fh.write(frame)
            self._fh.flush()
            os.fsync(self._fh.fileno())
        except OSError as exc:
            raise errors.StorageFailure(str(exc)) from exc
        self.records.append({**record, "seq": seq})
        self._next_seq += 1
        return seq

    def close(self) -> None:
        self._fh.close()


@dataclass(frozen=True)
class AnnotationAssignment:
    assignment_id: str
    battle_id: str
    annotator_id: str
    left_is_side_a: bool
    issued_at: str
    concept_text: str = ""
    definition: Optional[str] = None


@dataclass
class ServiceConfig:
    port: int = 8000
    data_dir: Path = Path("data")
    roster_file: Optional[Path] = None
    battles_file: Optional[Path] = None
    taxonomy_file: Optional[Path] = None
    image_dir: Optional[Path] = None
    static_dir: Optional[Path] = None
    seed: int = 0
    resamples: int = 200


def load_config(path: Optional[Union[str, Path]] = None,
                env: Optional[dict] = None) -> ServiceConfig:
    """key=value config file with environment overrides."""
    env = os.environ if env is None else env
    values: dict[str, str] = {}
    if path is not None:
        for raw in Path(path).read_text(encoding="utf-8").splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise errors.MalformedRecord(0, f"config line without '=': {line!r}")
            key, value = line.split("=", 1)
            values[key.strip().upper()] = value.strip()
    for key in ("PORT", "DATA_DIR", "ROSTER_FILE", "BATTLES_FILE",
                "TAXONOMY_FILE", "IMAGE_DIR", "STATIC_DIR", "SEED", "RESAMPLES"):
        if key in env:
            values[key] = env[key]
    cfg = ServiceConfig()
    if "PORT" in values:
        cfg.port = int(values["PORT"])
    if "DATA_DIR" in values:
        cfg.data_dir = Path(values["DATA_DIR"])
    if "ROSTER_FILE" in values:
        cfg.roster_file = Path(values["ROSTER_FILE"])
    if "BATTLES_FILE" in values:
        cfg.battles_file = Path(values["BATTLES_FILE"])
    if "TAXONOMY_FILE" in values:
        cfg.taxonomy_file = Path(values["TAXONOMY_FILE"])
    if "IMAGE_DIR" in values:
        cfg.image_dir = Path(values["IMAGE_DIR"])
    if "STATIC_DIR" in values:
        cfg.static_dir = Path(values["STATIC_DIR"])
    if "SEED" in values:
        cfg.seed = int(values["SEED"])
    if "RESAMPLES" in values:
        cfg.resamples = int(values["RESAMPLES"])
    return cfg


def load_roster(path: Union[str, Path]) -> dict[str, str]:
    """Roster lines are 'annotator_id:token'; returns token -> annotator id."""
    roster: dict[str, str] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise errors.MalformedRecord(0, f"roster line without ':': {line!r}")
        annotator, token = line.split(":", 1)
        roster[token.strip()] = annotator.strip()
    return roster


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class ArenaService:
    """Core annotation state machine, independent of the HTTP layer."""

    def __init__(self, battles: list[Battle], log_path: Union[str, Path],
                 annotators: Optional[set[str]] = None, seed: int = 0,
                 concept_texts: Optional[dict[str, str]] = None,
                 definitions: Optional[dict[str, str]] = None,
                 image_dir: Optional[Path] = None,
                 resamples: int = 200):
        self.battles = arena.battle_index(battles)
        self.annotators = annotators
        self.concept_texts = concept_texts or {}
        self.definitions = definitions or {}
        self.image_dir = Path(image_dir) if image_dir else None
        self.resamples = resamples
        self._rng = substream(seed, "service-display")
        self._lock = threading.Lock()
        self._log = AppendLog(log_path)
        # derived state, rebuilt from the log on startup
        self.assignments: dict[str, AnnotationAssignment] = {}
        self._open: dict[tuple[str, str], str] = {}  # (battle, annotator) -> assignment id
        self._judged: dict[tuple[str, str], dict] = {}
        self._verdict_counts: dict[str, int] = {b: 0 for b in self.battles}
        self._leaderboard_cache: dict = {}
        for record in self._log.records:
            self._apply(record)

    # -- state replay ---------------------------------------------------------

    def _apply(self, record: dict) -> None:
        if record["type"] == "assignment":
            a = AnnotationAssignment(
                assignment_id=f"a{record['seq']}",
                battle_id=record["battle_id"],
                annotator_id=record["annotator_id"],
                left_is_side_a=record["left_is_side_a"],
                issued_at=record["issued_at"],
            )
            self.assignments[a.assignment_id] = a
            self._open[(a.battle_id, a.annotator_id)] = a.assignment_id
        elif record["type"] == "verdict":
            key = (record["battle_id"], record["annotator_id"])
            self._judged[key] = record
            self._open.pop(key, None)
            self._verdict_counts[record["battle_id"]] = (
                self._verdict_counts.get(record["battle_id"], 0) + 1)

    # -- operations -------------------------------------------------------------

    def _check_annotator(self, annotator_id: str) -> None:
        if self.annotators is not None and annotator_id not in self.annotators:
            raise errors.UnknownAnnotator(annotator_id)

    def next_battle(self, annotator_id: str) -> Union[AnnotationAssignment, Exhausted]:
        """Least-judged battle this annotator has neither judged nor holds open.

        When every unjudged battle already has an open assignment for this
        annotator (e.g. abandoned tabs), the oldest open assignment is
        re-issued with its original display order; Exhausted only means the
        annotator has judged everything.
        """
        self._check_annotator(annotator_id)
        with self._lock:
            judged = {b for (b, a) in self._judged if a == annotator_id}
            open_here = {b for (b, a) in self._open if a == annotator_id}
            candidates = [b for b in self.battles
                          if b not in judged and b not in open_here]
            if not candidates:
                reissuable = sorted(
                    (int(self._open[(b, annotator_id)][1:]), b)
                    for b in open_here if b not in judged)
                if not reissuable:
                    return EXHAUSTED
                seq, battle_id = reissuable[0]
                assignment_id = f"a{seq}"
                battle = self.battles[battle_id]
                stored = self.assignments[assignment_id]
                return replace(
                    stored,
                    concept_text=self.concept_texts.get(battle.concept_id,
                                                        battle.concept_id),
                    definition=self.definitions.get(battle.concept_id))
            candidates.sort(key=lambda b: (self._verdict_counts.get(b, 0), b))
            battle_id = candidates[0]
            left_is_side_a = bool(self._rng.random() < 0.5)
            issued_at = _now()
            seq = self._log.append({
                "type": "assignment",
                "battle_id": battle_id,
                "annotator_id": annotator_id,
                "left_is_side_a": left_is_side_a,
                "issued_at": issued_at,
            })
            battle = self.battles[battle_id]
            assignment = AnnotationAssignment(
                assignment_id=f"a{seq}",
                battle_id=battle_id,
                annotator_id=annotator_id,
                left_is_side_a=left_is_side_a,
                issued_at=issued_at,
                concept_text=self.concept_texts.get(battle.concept_id,
                                                    battle.concept_id),
                definition=self.definitions.get(battle.concept_id),
            )
            self.assignments[assignment.assignment_id] = assignment
            self._open[(battle_id, annotator_id)] = assignment.assignment_id
            return assignment

    def submit_verdict(self, battle_id: str, annotator_id: str, choice: str,
                       definition_opened: bool = False) -> Outcome:
        """Translate the displayed choice through the logged display order."""
        self._check_annotator(annotator_id)
        if choice not in CHOICES:
            raise ValueError(f"choice must be one of {CHOICES}, got {choice!r}")
        with self._lock:
            key = (battle_id, annotator_id)
            if key in self._judged:
                raise errors.DuplicateVerdict(
                    f"{annotator_id!r} already judged battle {battle_id!r}")
            if key not in self._open:
                raise errors.NoOpenAssignment(
                    f"no open assignment for {annotator_id!r} on {battle_id!r}")
            assignment = self.assignments[self._open[key]]
            if choice == CHOICE_TIE:
                outcome = Outcome.TIE
            elif choice == CHOICE_BOTH_BAD:
                outcome = Outcome.BOTH_BAD
            elif (choice == CHOICE_LEFT) == assignment.left_is_side_a:
                outcome = Outcome.WIN_A
            else:
                outcome = Outcome.WIN_B
            self._log.append({
                "type": "verdict",
                "battle_id": battle_id,
                "annotator_id": annotator_id,
                "outcome": outcome.value,
                "choice": choice,
                "left_is_side_a": assignment.left_is_side_a,
                "definition_opened": definition_opened,
                "ts": _now(),
            })
            self._judged[key] = {"outcome": outcome.value}
            self._open.pop(key, None)
            self._verdict_counts[battle_id] = self._verdict_counts.get(battle_id, 0) + 1
            self._leaderboard_cache.clear()
            return outcome

    def verdicts(self) -> list[Verdict]:
        out = []
        for record in self._log.records:
            if record["type"] != "verdict":
                continue
            out.append(Verdict(record["battle_id"], record["annotator_id"],
                               Outcome(record["outcome"]), record.get("ts", "")))
        return out

    def progress(self, annotator_id: str) -> dict:
        done = sum(1 for (_, a) in self._judged if a == annotator_id)
        return {"judged": done, "total": len(self.battles)}

    def leaderboard(self, subset: Optional[str] = None, variant: Optional[str] = None,
                    judge: Optional[str] = None, seed: int = 0) -> list[dict]:
        """Fit + bootstrap over the filtered verdict log, cached until it grows."""
        cache_key = (len(self._log.records), subset, variant, judge, seed)
        if cache_key in self._leaderboard_cache:
            return self._leaderboard_cache[cache_key]
        verdicts = self.verdicts()
        if judge is not None:
            verdicts = [v for v in verdicts if v.judge_id == judge]
        keep = []
        for v in verdicts:
            b = self.battles[v.battle_id]
            if subset is not None and b.subset != subset:
                continue
            if variant is not None and b.variant != variant:
                continue
            keep.append(v)
        if not any(v.outcome in arena.DECISIVE for v in keep):
            raise errors.NoDecisiveVerdicts("no decisive verdicts in filter")
        intervals = arena.bootstrap_intervals(keep, self.battles,
                                              resamples=self.resamples, seed=seed)
        counts = arena.battle_counts(keep, self.battles)
        rows = arena.leaderboard_rows(intervals, counts)
        self._leaderboard_cache[cache_key] = rows
        return rows

    def export(self, format: str = "verdict-jsonl") -> bytes:
        """Byte-stable dump of the verdict log; round-trips through ranking."""
        buf = io.StringIO()
        if format == "verdict-jsonl":
            arena.save_verdicts(self.verdicts(), buf)
        elif format == "csv":
            buf.write("battle_id,judge_id,outcome,ts\n")
            for v in self.verdicts():
                buf.write(f"{v.battle_id},{v.judge_id},{v.outcome.value},{v.ts}\n")
        else:
            raise ValueError(f"unknown export format {format!r}")
        return buf.getvalue().encode("utf-8")

    def image_path(self, image_id: str) -> Path:
        if self.image_dir is None:
            raise FileNotFoundError("no image directory configured")
        path = (self.image_dir / image_id).resolve()
        if not str(path).startswith(str(self.image_dir.resolve())):
            raise FileNotFoundError(image_id)
        if not path.is_file():
            raise FileNotFoundError(image_id)
        return path

    def assignment_image(self, assignment_id: str, side: str) -> Path:
        """Opaque per-assignment image lookup so system names stay hidden."""
        assignment = self.assignments.get(assignment_id)
        if assignment is None:
            raise FileNotFoundError(assignment_id)
        battle = self.battles[assignment.battle_id]
        left_system = battle.side_a if assignment.left_is_side_a else battle.side_b
        right_system = battle.side_b if assignment.left_is_side_a else battle.side_a
        system = left_system if side == "left" else right_system
        return self.image_path(f"{system}/{battle.concept_id}.png")

    def close(self) -> None:
        self._log.close()


class VerdictRequest(BaseModel):
    battle_id: str
    annotator: str
    choice: str
    definition_opened: bool = False


def create_app(service: ArenaService, roster: Optional[dict[str, str]] = None,
               static_dir: Optional[Path] = None):
    """FastAPI wrapper; all state lives in the ArenaService."""
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import FileResponse, Response

    app = FastAPI(title="taxoarena annotation service")

    def resolve_annotator(token: str) -> str:
        if roster is None:
            return token
        if token not in roster:
            raise HTTPException(status_code=401, detail="unknown annotator token")
        return roster[token]

    @app.get("/api/next")
    def api_next(annotator: str):
        annotator_id = resolve_annotator(annotator)
        try:
            result = service.next_battle(annotator_id)
        except errors.UnknownAnnotator:
            raise HTTPException(status_code=401, detail="unknown annotator")
        progress = service.progress(annotator_id)
        if isinstance(result, Exhausted):
            return {"exhausted": True, "progress": progress}
        return {
            "exhausted": False,
            "assignment_id": result.assignment_id,
            "battle_id": result.battle_id,
            "concept": result.concept_text,
            "definition": result.definition,
            "left_image": f"/api/assignment/{result.assignment_id}/image/left",
            "right_image": f"/api/assignment/{result.assignment_id}/image/right",
            "progress": progress,
        }

    @app.post("/api/verdict")
    def api_verdict(body: VerdictRequest):
        annotator_id = resolve_annotator(body.annotator)
        try:
            outcome = service.submit_verdict(
                body.battle_id, annotator_id, body.choice,
                definition_opened=body.definition_opened)
        except errors.DuplicateVerdict as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except errors.NoOpenAssignment as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except errors.UnknownAnnotator:
            raise HTTPException(status_code=401, detail="unknown annotator")
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"ok": True, "outcome": outcome.value}

    @app.get("/api/leaderboard")
    def api_leaderboard(subset: Optional[str] = None, variant: Optional[str] = None,
                        judge: Optional[str] = None, seed: int = 0):
        try:
            rows = service.leaderboard(subset=subset, variant=variant,
                                       judge=judge, seed=seed)
        except errors.NoDecisiveVerdicts as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return {"rows": rows}

    @app.get("/api/export")
    def api_export(format: str = "verdict-jsonl"):
        try:
            data = service.export(format)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        media = "application/json" if format == "verdict-jsonl" else "text/csv"
        return Response(content=data, media_type=media)

    @app.get("/api/assignment/{assignment_id}/image/{side}")
    def api_assignment_image(assignment_id: str, side: str):
        if side not in ("left", "right"):
            raise HTTPException(status_code=422, detail="side must be left or right")
        try:
            return FileResponse(service.assignment_image(assignment_id, side))
        except FileNotFoundError:
            raise HTTPException(status_code=404, detail="image not found")

    @app.get("/api/image/{image_id:path}")
    def api_image(image_id: str):
        try:
            return FileResponse(service.image_path(image_id))
        except FileNotFoundError:
            raise HTTPException(status_code=404, detail="image not found")

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="static")

    return app


def run_server(config: ServiceConfig) -> None:  # pragma: no cover - wraps uvicorn
    import uvicorn

    if config.battles_file is None:
        raise errors.EmptyInput("service needs a battles file")
    with open(config.battles_file, "r", encoding="utf-8") as fh:
        battles = arena.load_battles(fh)
    concept_texts: dict[str, str] = {}
    definitions: dict[str, str] = {}
    if config.taxonomy_file is not None:
        from .taxonomy import load_taxonomy

        with open(config.taxonomy_file, "r", encoding="utf-8") as fh:
            graph = load_taxonomy(fh)
        concept_texts = {i: s.canonical_text for i, s in graph.synsets.items()}
        definitions = {i: s.definition for i, s in graph.synsets.items()
                       if s.definition}
    roster = load_roster(config.roster_file) if config.roster_file else None
    annotators = set(roster.values()) if roster else None
    config.data_dir.mkdir(parents=True, exist_ok=True)
    service = ArenaService(
        battles, config.data_dir / "annotation.log",
        annotators=annotators, seed=config.seed,
        concept_texts=concept_texts, definitions=definitions,
        image_dir=config.image_dir, resamples=config.resamples)
    app = create_app(service, roster=roster, static_dir=config.static_dir)
    uvicorn.run(app, host="0.0.0.0", port=config.port)

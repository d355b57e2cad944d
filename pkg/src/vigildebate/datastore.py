"""Question datasets, seeded sampling, and on-disk transcripts and run manifests.

Layout of a run directory::

    <run_id>/manifest.json
    <run_id>/index.jsonl
    <run_id>/<question_id>.json
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import tempfile
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import EmptyDataset, FingerprintMismatch, ParseError, SampleTooLarge

logger = logging.getLogger(__name__)

DATA_ROOT_ENV = "VIGILDEBATE_DATA_ROOT"
MANIFEST_NAME = "manifest.json"
INDEX_NAME = "index.jsonl"
FORMATS = ("jsonl", "lines", "hh-rlhf")


@dataclass(frozen=True)
class QuestionRecord:
    question_id: str
    text: str
    source: str = ""
    category: str | None = None


def text_id(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def data_root() -> Path:
    return Path(os.environ.get(DATA_ROOT_ENV, "."))


def resolve_path(path: str | Path) -> Path:
    path = Path(path)
    return path if path.is_absolute() or path.exists() else data_root() / path


def first_human_turn(dialogue: str) -> str:
    """Extract the opening human message from an HH-RLHF style transcript."""
    marker = "Human:"
    start = dialogue.find(marker)
    if start < 0:
        return dialogue.strip()
    rest = dialogue[start + len(marker):]
    end = rest.find("Assistant:")
    return (rest if end < 0 else rest[:end]).strip()


def _parse_jsonl_line(line: str, lineno: int, fmt: str, field_name: str) -> tuple[str, str | None, str | None]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", lineno) from exc
    if not isinstance(obj, dict):
        raise ParseError("expected a JSON object", lineno)
    if fmt == "hh-rlhf":
        dialogue = obj.get("chosen") or obj.get("transcript") or obj.get("prompt")
        if not isinstance(dialogue, str):
            raise ParseError("no dialogue field (chosen/transcript/prompt)", lineno)
        text = first_human_turn(dialogue)
    else:
        text = obj.get(field_name)
        if not isinstance(text, str):
            raise ParseError(f"missing string field {field_name!r}", lineno)
    qid = obj.get("question_id", obj.get("id"))
    category = obj.get("category")
    return text, None if qid is None else str(qid), None if category is None else str(category)


def load_dataset(path: str | Path, fmt: str = "jsonl", *, source: str | None = None, field_name: str = "question") -> list[QuestionRecord]:
    """Read questions in file order, dropping repeated question texts."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown dataset format {fmt!r}; expected one of {FORMATS}")
    path = resolve_path(path)
    source = source or path.stem
    records: list[QuestionRecord] = []
    seen_text: set[str] = set()
    seen_id: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if fmt == "lines":
                text, qid, category = line, None, None
            else:
                text, qid, category = _parse_jsonl_line(line, lineno, fmt, field_name)
            text = text.strip()
            if not text:
                continue
            if text in seen_text:
                logger.info("line %d duplicates an earlier question; skipped", lineno)
                continue
            qid = qid or text_id(text)
            if qid in seen_id:
                raise ParseError(f"duplicate question id {qid!r}", lineno)
            seen_text.add(text)
            seen_id.add(qid)
            records.append(QuestionRecord(qid, text, source, category))
    if not records:
        raise EmptyDataset(f"{path} contains no questions")
    return records


def sample(records: list[QuestionRecord], n: int, seed: int) -> list[QuestionRecord]:
    """Uniform draw without replacement; depends only on seed and input order."""
    if n > len(records):
        raise SampleTooLarge(f"cannot draw {n} from {len(records)} records")
    return random.Random(seed).sample(list(records), n)


def synthetic_dataset(n: int, source: str = "synthetic") -> list[QuestionRecord]:
    return [QuestionRecord(f"q{i:03d}", f"Synthetic question number {i}?", source) for i in range(1, n + 1)]


# -- atomic persistence --------------------------------------------------------


def atomic_write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def transcript_path(out_dir: str | Path, question_id: str) -> Path:
    return Path(out_dir) / f"{question_id}.json"


def persist_transcript(transcript, out_dir: str | Path) -> Path:
    path = atomic_write_text(transcript_path(out_dir, transcript.question_id), transcript.to_json())
    with open(Path(out_dir) / INDEX_NAME, "a", encoding="utf-8") as fh:
        fh.write(json.dumps({"question_id": transcript.question_id, "file": path.name}) + "\n")
    return path


def load_transcript(path: str | Path):
    from .engine import DebateTranscript

    return DebateTranscript.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def iter_transcript_files(run_dir: str | Path) -> list[Path]:
    return sorted(p for p in Path(run_dir).glob("*.json") if p.name != MANIFEST_NAME)


# -- run manifests ---------------------------------------------------------------


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    run_id: str
    config_fingerprint: str
    dataset: str
    seed: int
    sample_size: int
    sampled_ids: list[str]
    status: dict[str, str] = field(default_factory=dict)
    created: str = field(default_factory=_now)
    updated: str = field(default_factory=_now)

    def __post_init__(self):
        for qid in self.sampled_ids:
            self.status.setdefault(qid, "pending")

    def pending(self) -> list[str]:
        return [qid for qid in self.sampled_ids if self.status.get(qid) != "done"]

    def mark(self, question_id: str, status: str) -> None:
        if status not in ("pending", "done", "failed"):
            raise ValueError(f"bad status {status!r}")
        self.status[question_id] = status
        self.updated = _now()

    def save(self, run_dir: str | Path) -> Path:
        return atomic_write_text(Path(run_dir) / MANIFEST_NAME, json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, run_dir: str | Path) -> "RunManifest":
        return cls(**json.loads((Path(run_dir) / MANIFEST_NAME).read_text(encoding="utf-8")))


def new_manifest(run_id: str, config_fingerprint: str, records: list[QuestionRecord], dataset: str, seed: int, sample_size: int) -> RunManifest:
    drawn = sample(records, sample_size, seed)
    return RunManifest(run_id, config_fingerprint, dataset, seed, sample_size, [r.question_id for r in drawn])


def resume(manifest: RunManifest, config_fingerprint: str) -> list[str]:
    """Question ids still to run; refuses if the config has changed."""
    if manifest.config_fingerprint != config_fingerprint:
        raise FingerprintMismatch(
            f"run {manifest.run_id} was started with config {manifest.config_fingerprint}, "
            f"not {config_fingerprint}"
        )
    return manifest.pending()

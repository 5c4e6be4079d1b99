"""Reading and writing of every file the pipeline consumes or produces.

Row-oriented inputs (polls, user attributes) never raise on bad rows: each
row either becomes a record or lands in a :class:`RejectionReport` with its
line number.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .attributes import Role, UserAttributeRecord
from .core import DimensionRegistry, Election, FittedModel, PollRecord, ReferenceDistribution
from .errors import SchemaMismatch, Unreadable, ValidationError, VersionMismatch

SCHEMA_VERSION = 1

POLL_COLUMNS = (
    "poll_id", "author_id", "created_at", "election",
    "option_1_label", "option_2_label", "option_3_label", "option_4_label",
    "option_1_votes", "option_2_votes", "option_3_votes", "option_4_votes",
    "retweets", "favorites",
)
ATTRIBUTE_COLUMNS = (
    "user_id", "role", "poll_id", "ideology_score", "bot_score",
    "org_score", "age_years", "gender", "state",
)
_INT = re.compile(r"^[0-9]+$")
_OPTION_COL = re.compile(r"^option_([0-9]+)_(?:label|votes)$")


@dataclass(frozen=True)
class Rejection:
    line: int
    key: str
    reason: str


@dataclass
class RejectionReport:
    path: str
    n_rows: int = 0
    n_accepted: int = 0
    rejections: list[Rejection] = field(default_factory=list)

    def reject(self, line: int, key: str, reason: str) -> None:
        self.rejections.append(Rejection(line, key, reason))

    @property
    def ok(self) -> bool:
        return not self.rejections

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "n_rows": self.n_rows,
            "n_accepted": self.n_accepted,
            "n_rejected": len(self.rejections),
            "rejections": [{"line": r.line, "key": r.key, "reason": r.reason} for r in self.rejections],
        }


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise Unreadable(f"cannot read {path}: {exc}") from exc


def _dict_rows(path, required: Sequence[str]):
    reader = csv.DictReader(io.StringIO(_read_text(path), newline=""), restval="")
    header = reader.fieldnames
    if header is None:
        raise SchemaMismatch(f"{path}: missing header row")
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaMismatch(f"{path}: missing columns {missing}")
    for row in reader:
        # short rows get "" (restval); surplus fields sit under the None key
        yield reader.line_num, {k: ("" if v is None else v) for k, v in row.items()}


def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _count(text: str, what: str) -> int:
    text = text.strip()
    if not _INT.match(text):
        raise ValueError(f"{what} {text!r} is not a non-negative integer")
    return int(text)


def _opt_float(text: str | None, what: str) -> float | None:
    if text is None or text.strip() == "":
        return None
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"{what} {text!r} is not finite")
    return value


# ---------------------------------------------------------------------------
# Polls


def _parse_poll(row: Mapping[str, str]) -> PollRecord:
    if None in row:
        raise ValueError("row has more fields than the header")
    poll_id = row["poll_id"].strip()
    if not poll_id:
        raise ValueError("empty poll_id")
    width = max([4] + [int(m.group(1)) for m in map(_OPTION_COL.match, row) if m])
    labels = [(row.get(f"option_{i}_label") or "").strip() for i in range(1, width + 1)]
    votes = [(row.get(f"option_{i}_votes") or "").strip() for i in range(1, width + 1)]
    n = sum(1 for label in labels if label)
    if not 2 <= n <= 4:
        raise ValueError(f"option count {n} outside 2-4")
    if any(not labels[i] for i in range(n)) or any(votes[i] for i in range(n, width)):
        raise ValueError("options must fill leading columns without gaps")
    options = tuple((labels[i], _count(votes[i], f"option_{i + 1}_votes")) for i in range(n))
    try:
        election = Election(row["election"].strip())
    except ValueError:
        raise ValueError(f"unknown election {row['election']!r}") from None
    created = parse_timestamp(row["created_at"])
    if created > election.cutoff:
        raise ValueError(f"post-election: created_at {created.isoformat()} after {election.day}")
    return PollRecord(
        poll_id=poll_id,
        author_id=row["author_id"].strip(),
        created_at=created,
        election=election,
        options=options,
        retweets=_count(row["retweets"], "retweets"),
        favorites=_count(row["favorites"], "favorites"),
    )


def load_polls(path, season: Election | str | None = None) -> tuple[list[PollRecord], RejectionReport]:
    """Parse a poll CSV. Rows of another season, if one is given, are rejected."""
    season = None if season is None else Election(season)
    report = RejectionReport(str(path))
    polls: list[PollRecord] = []
    seen: set[str] = set()
    for line, row in _dict_rows(path, POLL_COLUMNS):
        report.n_rows += 1
        key = (row.get("poll_id") or "").strip()
        try:
            poll = _parse_poll(row)
            if season is not None and poll.election is not season:
                raise ValueError(f"season {poll.election.value} does not match {season.value}")
            if poll.poll_id in seen:
                raise ValueError("duplicate poll_id")
        except (ValueError, ValidationError) as exc:
            report.reject(line, key, str(exc))
            continue
        seen.add(poll.poll_id)
        polls.append(poll)
    report.n_accepted = len(polls)
    return polls, report


def polls_csv(polls: Iterable[PollRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(POLL_COLUMNS)
    for p in polls:
        labels = [label for label, _ in p.options] + [""] * (4 - len(p.options))
        votes = [str(v) for _, v in p.options] + [""] * (4 - len(p.options))
        stamp = p.created_at.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")
        writer.writerow([p.poll_id, p.author_id, stamp, p.election.value, *labels, *votes, p.retweets, p.favorites])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# User attributes


def _parse_attribute(row: Mapping[str, str]) -> UserAttributeRecord:
    if None in row:
        raise ValueError("row has more fields than the header")
    age = (row.get("age_years") or "").strip()
    gender = (row.get("gender") or "").strip().lower() or None
    state = (row.get("state") or "").strip().upper() or None
    user_id = row["user_id"].strip()
    poll_id = row["poll_id"].strip()
    if not user_id or not poll_id:
        raise ValueError("empty user_id or poll_id")
    try:
        role = Role(row["role"].strip().lower())
    except ValueError:
        raise ValueError(f"unknown role {row['role']!r}") from None
    return UserAttributeRecord(
        user_id=user_id,
        role=role,
        poll_id=poll_id,
        ideology_score=_opt_float(row.get("ideology_score"), "ideology_score"),
        bot_score=_opt_float(row.get("bot_score"), "bot_score"),
        org_score=_opt_float(row.get("org_score"), "org_score"),
        age_years=_count(age, "age_years") if age else None,
        gender=gender,
        state=state,
    )


def load_attributes(
    path, poll_ids: Iterable[str] | None = None
) -> tuple[list[UserAttributeRecord], RejectionReport]:
    """Parse a user-attribute CSV; with ``poll_ids``, rows linked to unknown polls are rejected."""
    known = None if poll_ids is None else set(poll_ids)
    report = RejectionReport(str(path))
    records = []
    for line, row in _dict_rows(path, ATTRIBUTE_COLUMNS):
        report.n_rows += 1
        key = f"{(row.get('user_id') or '').strip()}@{(row.get('poll_id') or '').strip()}"
        try:
            rec = _parse_attribute(row)
            if known is not None and rec.poll_id not in known:
                raise ValueError(f"unknown poll_id {rec.poll_id!r}")
        except (ValueError, ValidationError) as exc:
            report.reject(line, key, str(exc))
            continue
        records.append(rec)
    report.n_accepted = len(records)
    return records, report


def _fmt(x) -> str:
    return "" if x is None else repr(x) if isinstance(x, float) else str(x)


def attributes_csv(records: Iterable[UserAttributeRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ATTRIBUTE_COLUMNS)
    for r in records:
        writer.writerow([
            r.user_id, r.role.value, r.poll_id, _fmt(r.ideology_score), _fmt(r.bot_score),
            _fmt(r.org_score), _fmt(r.age_years), _fmt(r.gender), _fmt(r.state),
        ])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# JSON documents


def dumps(data) -> str:
    """Canonical JSON text used for every emitted document."""
    return json.dumps(data, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def _load_json(path):
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise Unreadable(f"{path}: invalid JSON: {exc}") from exc


def _check_version(data: Mapping, path) -> None:
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise VersionMismatch(f"{path}: schema_version {version!r} unsupported (expected {SCHEMA_VERSION})")


def load_registry(path) -> DimensionRegistry:
    return DimensionRegistry.from_dict(_load_json(path))


def load_reference(path) -> ReferenceDistribution:
    data = _load_json(path)
    _check_version(data, path)
    return ReferenceDistribution.from_dict(data)


def save_reference(ref: ReferenceDistribution, path) -> None:
    Path(path).write_text(dumps(ref.to_dict()), encoding="utf-8")


def save_model(model: FittedModel, path) -> None:
    Path(path).write_text(dumps({"schema_version": SCHEMA_VERSION, **model.to_dict()}), encoding="utf-8")


def load_model(path) -> FittedModel:
    data = _load_json(path)
    _check_version(data, path)
    return FittedModel.from_dict(data)


def load_color_map(path) -> dict[str, str]:
    data = _load_json(path)
    bad = {k: v for k, v in data.items() if v not in ("red", "blue", "swing")}
    if bad:
        raise ValidationError(f"{path}: invalid colors {bad}")
    return {k.upper(): v for k, v in data.items()}


def load_election_results(path) -> dict[str, tuple[float, float]]:
    """Per-state results CSV with columns ``state, rep, dem`` (votes or shares)."""
    out = {}
    for line, row in _dict_rows(path, ("state", "rep", "dem")):
        try:
            out[row["state"].strip().upper()] = (float(row["rep"]), float(row["dem"]))
        except ValueError as exc:
            raise ValidationError(f"{path}:{line}: {exc}") from exc
    return out


def load_head_to_head(path) -> list[dict]:
    """Mainstream polls or election results already reduced to two focal shares.

    Columns ``id, election, trump, dem``; each row gains its normalized share.
    """
    from .normalize import normalize_shares

    out = []
    for line, row in _dict_rows(path, ("id", "election", "trump", "dem")):
        try:
            trump, dem = float(row["trump"]), float(row["dem"])
            out.append({
                "id": row["id"].strip(),
                "election": Election(row["election"].strip()).value,
                "trump": trump,
                "dem": dem,
                "share_focal": normalize_shares(trump, dem),
            })
        except (ValueError, ValidationError) as exc:
            raise ValidationError(f"{path}:{line}: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# Bundle


@dataclass(frozen=True)
class CorpusBundle:
    polls: list[PollRecord]
    attributes: list[UserAttributeRecord]
    reference: ReferenceDistribution | None
    provenance: dict = field(default_factory=dict)


def load_bundle(polls_path, attributes_path=None, reference_path=None, season=None):
    """Load and cross-link the input files; returns ``(bundle, reports)``."""
    polls, poll_report = load_polls(polls_path, season)
    reports = [poll_report]
    provenance = {"polls": {"sha256": sha256_file(polls_path), "rows": poll_report.n_rows}}
    attributes: list[UserAttributeRecord] = []
    if attributes_path is not None:
        attributes, attr_report = load_attributes(attributes_path, [p.poll_id for p in polls])
        reports.append(attr_report)
        provenance["attributes"] = {"sha256": sha256_file(attributes_path), "rows": attr_report.n_rows}
    reference = None
    if reference_path is not None:
        reference = load_reference(reference_path)
        provenance["reference"] = {"sha256": sha256_file(reference_path)}
    return CorpusBundle(polls, attributes, reference, provenance), reports

"""Domain records: groups of faces with named feature channels, plus dataset IO.

A dataset is a line-delimited JSON file, one group per line:

    {"id": "g0", "label": 3.5, "faces": [{"left_eye": [x, y],
     "right_eye": [x, y], "nose_tip": [x, y],
     "channels": {"hist": [...], "embed": [...]}}]}

An optional sidecar file declares the channel schema:

    {"channels": [{"name": "hist", "dim": 24, "kind": "histogram",
                   "divergence": "chi_square", "sigma": 100.0}]}
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

CHANNEL_KINDS = ("histogram", "embedding")

# (divergence, sigma) used when a schema omits them or is inferred from data.
KIND_DEFAULTS = {
    "histogram": ("chi_square", 100.0),
    "embedding": ("sq_euclidean", 10.0),
}


class DatasetError(ValueError):
    """Base class for dataset problems."""


class ParseError(DatasetError):
    """A line is structurally malformed (bad JSON, missing or ill-typed fields)."""


class ValidationError(DatasetError):
    """Well-formed input that violates a record or schema invariant."""


def _as_point(value, what: str) -> tuple[float, float]:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    ):
        raise ParseError(f"{what} must be a [x, y] pair of numbers")
    return (float(value[0]), float(value[1]))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class FaceRecord:
    """One face: eye and nose-tip landmarks plus named feature vectors.

    The two eyes must be distinct (the face-size weight divides by the eye
    distance). Channel vectors are stored as read-only float64 arrays.
    """

    left_eye: tuple[float, float]
    right_eye: tuple[float, float]
    nose_tip: tuple[float, float]
    channels: dict[str, np.ndarray]

    def __post_init__(self):
        object.__setattr__(self, "left_eye", (float(self.left_eye[0]), float(self.left_eye[1])))
        object.__setattr__(self, "right_eye", (float(self.right_eye[0]), float(self.right_eye[1])))
        object.__setattr__(self, "nose_tip", (float(self.nose_tip[0]), float(self.nose_tip[1])))
        if self.left_eye == self.right_eye:
            raise ValidationError("left and right eye coincide (eye distance must be > 0)")
        chans = {}
        for name, vec in self.channels.items():
            arr = _readonly(np.asarray(vec, dtype=np.float64).reshape(-1))
            if arr.size == 0:
                raise ValidationError(f"channel {name!r} is empty")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"channel {name!r} contains non-finite values")
            chans[name] = arr
        object.__setattr__(self, "channels", chans)

    def __eq__(self, other):
        if not isinstance(other, FaceRecord):
            return NotImplemented
        return (
            self.left_eye == other.left_eye
            and self.right_eye == other.right_eye
            and self.nose_tip == other.nose_tip
            and self.channels.keys() == other.channels.keys()
            and all(np.array_equal(self.channels[k], other.channels[k]) for k in self.channels)
        )


@dataclass(frozen=True, eq=False)
class GroupRecord:
    """One group image: a non-empty face set and a real-valued intensity label."""

    id: str
    label: float
    faces: tuple[FaceRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "label", float(self.label))
        object.__setattr__(self, "faces", tuple(self.faces))
        if not self.faces:
            raise ValidationError("empty face set")
        if not math.isfinite(self.label):
            raise ValidationError("label must be finite")
        first = self.faces[0]
        for idx, face in enumerate(self.faces):
            if face.channels.keys() != first.channels.keys():
                missing = sorted(
                    first.channels.keys() ^ face.channels.keys()
                )
                raise ValidationError(
                    f"face {idx} does not match the group channel set "
                    f"(mismatched channel {missing[0]!r})"
                )
            for name, vec in face.channels.items():
                if vec.shape != first.channels[name].shape:
                    raise ValidationError(
                        f"face {idx} channel {name!r} has dimension {vec.size}, "
                        f"expected {first.channels[name].size}"
                    )

    def __eq__(self, other):
        if not isinstance(other, GroupRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.label == other.label
            and self.faces == other.faces
        )

    @property
    def channel_names(self) -> tuple[str, ...]:
        return tuple(self.faces[0].channels.keys())

    def channel_dim(self, name: str) -> int:
        return int(self.faces[0].channels[name].size)


@dataclass(frozen=True, eq=False)
class SortedSequence:
    """One channel of a group in canonical order of descending global weight."""

    group_id: str
    channel: str
    vectors: np.ndarray  # (n_faces, dim)
    weights: np.ndarray  # (n_faces,), non-increasing
    order: tuple[int, ...]  # original face index of each row

    def __post_init__(self):
        vectors = _readonly(np.atleast_2d(np.asarray(self.vectors, dtype=np.float64)))
        weights = _readonly(np.asarray(self.weights, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "order", tuple(int(i) for i in self.order))
        if not (len(vectors) == len(weights) == len(self.order)):
            raise ValidationError("vectors, weights and order must have equal length")
        if np.any(np.diff(weights) > 0):
            raise ValidationError("weights must be sorted non-increasing")

    def __len__(self) -> int:
        return len(self.order)

    def __eq__(self, other):
        if not isinstance(other, SortedSequence):
            return NotImplemented
        return (
            self.group_id == other.group_id
            and self.channel == other.channel
            and self.order == other.order
            and np.array_equal(self.vectors, other.vectors)
            and np.array_equal(self.weights, other.weights)
        )


@dataclass(frozen=True)
class ChannelSpec:
    """Declared properties of one feature channel."""

    name: str
    dim: int
    kind: str = "embedding"
    divergence: str | None = None
    sigma: float | None = None

    def __post_init__(self):
        if not self.name:
            raise ValidationError("channel name must be non-empty")
        if self.dim < 1:
            raise ValidationError(f"channel {self.name!r}: dim must be >= 1")
        if self.kind not in CHANNEL_KINDS:
            raise ValidationError(f"channel {self.name!r}: unknown kind {self.kind!r}")
        default_div, default_sigma = KIND_DEFAULTS[self.kind]
        if self.divergence is None:
            object.__setattr__(self, "divergence", default_div)
        if self.sigma is None:
            object.__setattr__(self, "sigma", default_sigma)
        object.__setattr__(self, "sigma", float(self.sigma))
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValidationError(f"channel {self.name!r}: sigma must be finite and > 0")
        if self.divergence not in ("sq_euclidean", "chi_square"):
            raise ValidationError(
                f"channel {self.name!r}: unknown divergence {self.divergence!r}"
            )
        if self.divergence == "chi_square" and self.kind != "histogram":
            raise ValidationError(
                f"channel {self.name!r}: chi_square requires a histogram channel"
            )


@dataclass(frozen=True)
class ChannelSchema:
    """The common channel layout shared by every face of a dataset."""

    channels: tuple[ChannelSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        names = [c.name for c in self.channels]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate channel names in schema")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.channels)

    def get(self, name: str) -> ChannelSpec:
        for c in self.channels:
            if c.name == name:
                return c
        raise KeyError(f"unknown channel {name!r}")

    def validate_group(self, record: GroupRecord, line: int | None = None) -> None:
        """Check one record against this schema; raise ValidationError on mismatch."""
        where = f"line {line}: " if line is not None else f"record {record.id!r}: "
        if set(record.channel_names) != set(self.names):
            raise ValidationError(
                where + f"channels {sorted(record.channel_names)} do not match "
                f"schema channels {sorted(self.names)}"
            )
        for spec in self.channels:
            for idx, face in enumerate(record.faces):
                vec = face.channels[spec.name]
                if vec.size != spec.dim:
                    raise ValidationError(
                        where + f"face {idx} channel {spec.name!r} has dimension "
                        f"{vec.size}, schema declares {spec.dim}"
                    )
                if spec.kind == "histogram" and np.any(vec < 0):
                    raise ValidationError(
                        where + f"face {idx} channel {spec.name!r} has a negative "
                        "histogram entry"
                    )

    def to_dict(self) -> dict:
        return {
            "channels": [
                {
                    "name": c.name,
                    "dim": c.dim,
                    "kind": c.kind,
                    "divergence": c.divergence,
                    "sigma": c.sigma,
                }
                for c in self.channels
            ]
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ChannelSchema":
        try:
            entries = doc["channels"]
        except (TypeError, KeyError):
            raise ParseError("schema document must contain a 'channels' list")
        specs = []
        for entry in entries:
            try:
                specs.append(
                    ChannelSpec(
                        name=entry["name"],
                        dim=int(entry["dim"]),
                        kind=entry.get("kind", "embedding"),
                        divergence=entry.get("divergence"),
                        sigma=entry.get("sigma"),
                    )
                )
            except (TypeError, KeyError) as exc:
                raise ParseError(f"malformed channel entry: {exc}") from exc
        return cls(tuple(specs))


def _iter_lines(stream: str | TextIO | Iterable[str]) -> Iterable[tuple[int, str]]:
    lines = stream.splitlines() if isinstance(stream, str) else stream
    for lineno, raw in enumerate(lines, start=1):
        text = raw.strip()
        if text:
            yield lineno, text


def parse_group_records(
    stream: str | TextIO | Iterable[str],
    schema: ChannelSchema | None = None,
) -> list[GroupRecord]:
    """Parse line-delimited group records, preserving input order.

    Every record is validated against the GroupRecord invariants; when a
    schema is given each record is additionally checked against it
    (dimensions, histogram non-negativity). Errors report the line number.
    """
    records = []
    for lineno, text in _iter_lines(stream):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
        try:
            record = _group_from_dict(doc)
        except ParseError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from exc
        if schema is not None:
            schema.validate_group(record, line=lineno)
        records.append(record)
    return records


def _group_from_dict(doc) -> GroupRecord:
    if not isinstance(doc, dict):
        raise ParseError("record must be a JSON object")
    try:
        rid = doc["id"]
        label = doc["label"]
        faces = doc["faces"]
    except KeyError as exc:
        raise ParseError(f"missing field {exc.args[0]!r}") from exc
    if not isinstance(rid, str):
        raise ParseError("'id' must be a string")
    if not isinstance(label, (int, float)) or isinstance(label, bool):
        raise ParseError("'label' must be a number")
    if not isinstance(faces, list):
        raise ParseError("'faces' must be a list")
    parsed = []
    for idx, fdoc in enumerate(faces):
        if not isinstance(fdoc, dict):
            raise ParseError(f"face {idx} must be a JSON object")
        try:
            left = fdoc["left_eye"]
            right = fdoc["right_eye"]
            nose = fdoc["nose_tip"]
            channels = fdoc["channels"]
        except KeyError as exc:
            raise ParseError(f"face {idx}: missing field {exc.args[0]!r}") from exc
        if not isinstance(channels, dict) or not channels:
            raise ParseError(f"face {idx}: 'channels' must be a non-empty object")
        for name, vec in channels.items():
            if not isinstance(vec, list):
                raise ParseError(f"face {idx}: channel {name!r} must be a list of numbers")
        parsed.append(
            FaceRecord(
                left_eye=_as_point(left, f"face {idx}: left_eye"),
                right_eye=_as_point(right, f"face {idx}: right_eye"),
                nose_tip=_as_point(nose, f"face {idx}: nose_tip"),
                channels={name: vec for name, vec in channels.items()},
            )
        )
    return GroupRecord(id=rid, label=float(label), faces=tuple(parsed))


def group_to_dict(record: GroupRecord) -> dict:
    return {
        "id": record.id,
        "label": record.label,
        "faces": [
            {
                "left_eye": list(f.left_eye),
                "right_eye": list(f.right_eye),
                "nose_tip": list(f.nose_tip),
                "channels": {k: v.tolist() for k, v in f.channels.items()},
            }
            for f in record.faces
        ],
    }


def serialize_group_records(records: Sequence[GroupRecord]) -> str:
    """Serialize records to line-delimited JSON.

    Floats go through repr, so parse(serialize(records)) reproduces every
    value bit for bit.
    """
    return "".join(json.dumps(group_to_dict(r)) + "\n" for r in records)


def dataset_hash(records: Sequence[GroupRecord]) -> str:
    """Content hash used to detect Gram-matrix / dataset mismatches."""
    digest = hashlib.sha256(serialize_group_records(records).encode("utf-8"))
    return digest.hexdigest()[:16]


def validate_schema(
    records: Sequence[GroupRecord],
    declared: ChannelSchema | None = None,
) -> ChannelSchema:
    """Return the channel schema common to all records, or fail.

    With a declared schema, every record is validated against it. Without
    one, dimensionality comes from the data and a channel is inferred to be
    a histogram when all of its entries are non-negative; divergence and
    sigma fall back to the per-kind defaults.
    """
    if not records:
        raise ValidationError("no records")
    if declared is not None:
        for record in records:
            declared.validate_group(record)
        return declared

    names = records[0].channel_names
    dims = {name: records[0].channel_dim(name) for name in names}
    nonneg = {name: True for name in names}
    for record in records:
        if set(record.channel_names) != set(names):
            raise ValidationError(
                f"record {record.id!r}: channels {sorted(record.channel_names)} "
                f"do not match {sorted(names)}"
            )
        for name in names:
            if record.channel_dim(name) != dims[name]:
                raise ValidationError(
                    f"record {record.id!r}: channel {name!r} has dimension "
                    f"{record.channel_dim(name)}, expected {dims[name]}"
                )
            if nonneg[name]:
                nonneg[name] = all(
                    bool(np.all(f.channels[name] >= 0)) for f in record.faces
                )
    specs = tuple(
        ChannelSpec(
            name=name,
            dim=dims[name],
            kind="histogram" if nonneg[name] else "embedding",
        )
        for name in names
    )
    return ChannelSchema(specs)


def load_schema(stream: str | TextIO) -> ChannelSchema:
    text = stream if isinstance(stream, str) else stream.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid schema JSON ({exc.msg})") from exc
    return ChannelSchema.from_dict(doc)


def dump_schema(schema: ChannelSchema) -> str:
    return json.dumps(schema.to_dict(), indent=2) + "\n"

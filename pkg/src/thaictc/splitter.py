"""Speaker-disjoint corpus splitting.

Re-splits a new corpus version around a legacy split in three steps: drop
rows already covered by the legacy split, place the remaining speakers by
greedy duration bin-packing (legacy speakers are locked to their old label),
then merge the legacy assignment back in unchanged. All utterances of a
speaker always land in the same split.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError, ValidationError

LABELS = ("train", "valid", "test")


@dataclass(frozen=True)
class Utterance:
    client_id: str
    path: str
    sentence: str
    duration_ms: int = 0


@dataclass(frozen=True)
class SplitTargets:
    train_fraction: float
    valid_fraction: float
    test_fraction: float
    seed: int = 0

    def __post_init__(self):
        fractions = (self.train_fraction, self.valid_fraction, self.test_fraction)
        for f in fractions:
            if not 0.0 < f < 1.0:
                raise ValidationError(f"split fraction {f} outside (0, 1)")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ValidationError(f"split fractions sum to {sum(fractions)}, expected 1")

    def fraction(self, label: str) -> float:
        return {
            "train": self.train_fraction,
            "valid": self.valid_fraction,
            "test": self.test_fraction,
        }[label]


@dataclass
class SplitAssignment:
    labels: dict[str, str] = field(default_factory=dict)        # path -> label
    provenance: dict[str, str] = field(default_factory=dict)    # path -> legacy|new
    speaker_of: dict[str, str] = field(default_factory=dict)    # path -> client_id

    def speaker_labels(self) -> dict[str, set[str]]:
        out: dict[str, set[str]] = {}
        for path, label in self.labels.items():
            out.setdefault(self.speaker_of[path], set()).add(label)
        return out


@dataclass
class LeakageReport:
    offending_speakers: dict[str, list[str]]
    utterance_counts: dict[str, int]
    duration_ms: dict[str, int]

    @property
    def clean(self) -> bool:
        return not self.offending_speakers

    def to_dict(self) -> dict:
        return {
            "clean": self.clean,
            "offending_speakers": self.offending_speakers,
            "utterance_counts": self.utterance_counts,
            "duration": {k: format_duration(v) for k, v in self.duration_ms.items()},
            "duration_ms": self.duration_ms,
        }

    def to_text(self) -> str:
        lines = []
        for label in (*LABELS, "total"):
            lines.append(
                f"{label:<6} {self.utterance_counts.get(label, 0):>8} utterances  "
                f"{format_duration(self.duration_ms.get(label, 0))}"
            )
        if self.clean:
            lines.append("speaker overlap: none")
        else:
            for speaker, labels in sorted(self.offending_speakers.items()):
                lines.append(f"speaker overlap: {speaker} in {', '.join(labels)}")
        return "\n".join(lines)


def format_duration(ms: int) -> str:
    seconds = int(ms) // 1000
    h, rem = divmod(seconds, 3600)
    m, s = divmod(rem, 60)
    return f"{h} hours {m} minutes {s} seconds"


def load_corpus_metadata(
    path: str | Path, diagnostics: list[str] | None = None
) -> list[Utterance]:
    """Parse a tab-separated corpus file (CommonVoice validated.tsv layout).

    Requires client_id, path and sentence columns; duration_ms is optional and
    defaults to 0 (counted in `diagnostics`). Duplicate paths are fatal.
    """
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f, delimiter="\t", quoting=csv.QUOTE_NONE)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file")
        columns = {name: i for i, name in enumerate(header)}
        for required in ("client_id", "path", "sentence"):
            if required not in columns:
                raise FormatError(f"{path}: missing column {required}")
        dur_col = columns.get("duration_ms")

        utterances = []
        seen_paths = set()
        missing_durations = 0
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < len(header):
                raise FormatError(f"{path}: expected {len(header)} fields", lineno)
            client_id = row[columns["client_id"]]
            clip = row[columns["path"]]
            if not client_id:
                raise FormatError(f"{path}: empty client_id", lineno)
            if clip in seen_paths:
                raise FormatError(f"{path}: duplicate path {clip!r}", lineno)
            seen_paths.add(clip)
            duration = 0
            if dur_col is not None and dur_col < len(row):
                try:
                    duration = int(round(float(row[dur_col])))
                except ValueError:
                    duration = 0
            if duration <= 0:
                missing_durations += 1
                duration = max(duration, 0)
            utterances.append(
                Utterance(client_id, clip, row[columns["sentence"]], duration)
            )
    if missing_durations and diagnostics is not None:
        diagnostics.append(f"{path}: {missing_durations} rows without duration_ms")
    return utterances


def subtract_legacy(v8: list[Utterance], v7_assignment: SplitAssignment) -> list[Utterance]:
    """Rows of the new corpus not already covered by the legacy assignment."""
    return [u for u in v8 if u.path not in v7_assignment.labels]


def locked_speakers_from(assignment: SplitAssignment) -> dict[str, str]:
    """Speaker -> label map of an assignment; a speaker under two labels is a
    leakage error."""
    locked: dict[str, str] = {}
    for speaker, labels in assignment.speaker_labels().items():
        if len(labels) > 1:
            raise ValidationError(
                f"speaker {speaker!r} appears in splits {sorted(labels)}"
            )
        locked[speaker] = next(iter(labels))
    return locked


def _speaker_weights(utterances: list[Utterance]) -> dict[str, int]:
    # Balance by duration when available, by utterance count otherwise.
    use_duration = any(u.duration_ms > 0 for u in utterances)
    weights: dict[str, int] = {}
    for u in utterances:
        w = u.duration_ms if use_duration else 1
        weights[u.client_id] = weights.get(u.client_id, 0) + w
    return weights


def split_by_speaker(
    new_only: list[Utterance],
    targets: SplitTargets,
    locked_speakers: dict[str, str] | None = None,
) -> SplitAssignment:
    """Assign every utterance a split label, keeping speakers intact.

    Locked speakers keep their given label. The rest are placed greedily:
    heaviest speaker first (ties by client_id), each into the split with the
    largest remaining duration deficit (ties in train, valid, test order).
    """
    locked_speakers = locked_speakers or {}
    for speaker, label in locked_speakers.items():
        if label not in LABELS:
            raise ValidationError(f"locked speaker {speaker!r} has bad label {label!r}")

    weights = _speaker_weights(new_only)
    total = sum(weights.values())
    deficit = {label: targets.fraction(label) * total for label in LABELS}

    chosen: dict[str, str] = {}
    free: list[str] = []
    for speaker in weights:
        label = locked_speakers.get(speaker)
        if label is not None:
            chosen[speaker] = label
            deficit[label] -= weights[speaker]
        else:
            free.append(speaker)

    free.sort(key=lambda s: (-weights[s], s))
    for speaker in free:
        label = max(LABELS, key=lambda lb: (deficit[lb], -LABELS.index(lb)))
        chosen[speaker] = label
        deficit[label] -= weights[speaker]

    assignment = SplitAssignment()
    for u in new_only:
        assignment.labels[u.path] = chosen[u.client_id]
        assignment.provenance[u.path] = "new"
        assignment.speaker_of[u.path] = u.client_id
    return assignment


def merge_legacy(
    new_assignment: SplitAssignment, v7_assignment: SplitAssignment
) -> SplitAssignment:
    """Union of the new and legacy assignments; legacy labels are preserved
    exactly. Path collisions and cross-split speakers are fatal."""
    overlap = set(new_assignment.labels) & set(v7_assignment.labels)
    if overlap:
        raise ValidationError(f"path {sorted(overlap)[0]!r} present in both assignments")

    merged = SplitAssignment(
        labels={**v7_assignment.labels, **new_assignment.labels},
        provenance={**v7_assignment.provenance, **new_assignment.provenance},
        speaker_of={**v7_assignment.speaker_of, **new_assignment.speaker_of},
    )
    for speaker, labels in merged.speaker_labels().items():
        if len(labels) > 1:
            raise ValidationError(
                f"speaker {speaker!r} would leak across splits {sorted(labels)}"
            )
    return merged


def verify_no_leakage(
    assignment: SplitAssignment, corpus: list[Utterance]
) -> LeakageReport:
    offenders = {
        speaker: sorted(labels)
        for speaker, labels in assignment.speaker_labels().items()
        if len(labels) > 1
    }
    counts = {label: 0 for label in LABELS}
    durations = {label: 0 for label in LABELS}
    for u in corpus:
        label = assignment.labels.get(u.path)
        if label is None:
            continue
        counts[label] += 1
        durations[label] += u.duration_ms
    counts["total"] = sum(counts[lb] for lb in LABELS)
    durations["total"] = sum(durations[lb] for lb in LABELS)
    return LeakageReport(offenders, counts, durations)


def assignment_from_manifests(
    paths_by_label: dict[str, str | Path], provenance: str = "legacy"
) -> tuple[SplitAssignment, list[Utterance]]:
    """Load one manifest TSV per label into a single assignment."""
    assignment = SplitAssignment()
    corpus: list[Utterance] = []
    for label, manifest in paths_by_label.items():
        if label not in LABELS:
            raise ValidationError(f"unknown split label {label!r}")
        for u in load_corpus_metadata(manifest):
            if u.path in assignment.labels:
                raise FormatError(f"path {u.path!r} listed in more than one manifest")
            assignment.labels[u.path] = label
            assignment.provenance[u.path] = provenance
            assignment.speaker_of[u.path] = u.client_id
            corpus.append(u)
    return assignment, corpus


def write_manifests(
    assignment: SplitAssignment, corpus: list[Utterance], out_dir: str | Path
) -> dict[str, Path]:
    """Write train/valid/test TSVs (corpus schema plus provenance), rows
    sorted by path so outputs are byte-stable."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_label: dict[str, list[Utterance]] = {label: [] for label in LABELS}
    for u in corpus:
        label = assignment.labels.get(u.path)
        if label is not None:
            by_label[label].append(u)

    written = {}
    for label in LABELS:
        target = out_dir / f"{label}.tsv"
        with open(target, "w", encoding="utf-8", newline="\n") as f:
            f.write("client_id\tpath\tsentence\tduration_ms\tprovenance\n")
            for u in sorted(by_label[label], key=lambda u: u.path):
                f.write(
                    f"{u.client_id}\t{u.path}\t{u.sentence}\t{u.duration_ms}\t"
                    f"{assignment.provenance[u.path]}\n"
                )
        written[label] = target
    return written

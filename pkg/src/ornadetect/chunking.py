"""Boundary-preserving chunking of long recordings and frame-label rasterization.

Long clips are cut into nominal ``t``-second chunks. When an event starts
inside a chunk but runs past its end, the next chunk restarts at that event's
onset so the event appears intact somewhere, and the truncated portion in the
current chunk is masked as don't-care rather than class-labeled. Events longer
than ``t`` can never fit in one chunk; they are kept class-labeled up to the
chunk end and the planner advances by ``t`` (the loop-break rule), attaching a
warning.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import BACKGROUND, CLASS_CODES, DONT_CARE, Event, OrnamentClass, class_from_string

# frame-kind codes for FrameLabels
VALID = 0
TRUNCATED = 1  # inside a don't-care span of a truncated event
PAD = 2        # beyond the chunk's audio


@dataclass(frozen=True)
class DontCareSpan:
    """Absolute-time [start, end) interval masked as don't-care, remembering
    the truncated event's class (needed to undo masking for ablations)."""

    start: float
    end: float
    label: OrnamentClass


@dataclass(frozen=True)
class ChunkPlan:
    clip_id: str
    index: int
    start: float
    length: float      # nominal chunk length t
    audio_end: float   # absolute end of available audio, <= start + length
    dont_care_spans: tuple[DontCareSpan, ...]
    events: tuple[Event, ...]  # class-labeled events, clipped to the chunk
    warnings: tuple[str, ...] = ()

    @property
    def end(self) -> float:
        return self.start + self.length


@dataclass(frozen=True)
class FrameLabels:
    """Per-frame targets for one chunk.

    ``class_ids``: 0 = background, 1..6 = ornament classes. Frames whose
    ``kind`` is TRUNCATED carry the truncated event's class here so that the
    no-masking ablation can restore it; PAD frames carry background.
    ``kind``: VALID / TRUNCATED / PAD; only VALID frames enter the loss.
    """

    class_ids: np.ndarray
    kind: np.ndarray

    def __post_init__(self):
        if self.class_ids.shape != self.kind.shape:
            raise ValueError("class_ids and kind must have equal length")

    def __len__(self) -> int:
        return len(self.class_ids)

    @property
    def valid(self) -> np.ndarray:
        return self.kind == VALID

    def symbols(self) -> np.ndarray:
        """Labels with don't-care frames collapsed to the DONT_CARE symbol."""
        out = self.class_ids.astype(np.int64).copy()
        out[self.kind != VALID] = DONT_CARE
        return out

    def without_masking(self) -> "FrameLabels":
        """Ablation view: truncated frames become ordinary class-labeled
        frames; pad frames stay masked (they have no audio at all)."""
        kind = self.kind.copy()
        kind[kind == TRUNCATED] = VALID
        return FrameLabels(self.class_ids.copy(), kind)


def plan_chunks(
    duration: float,
    events: list[Event] | tuple[Event, ...],
    t: float = 10.0,
    clip_id: str = "",
) -> list[ChunkPlan]:
    """Plan boundary-preserving chunks for one clip.

    Every chunk spans nominally [start, start + t]; the final chunk may extend
    past the audio, with the surplus later rasterized as pad frames.
    """
    if t <= 0:
        raise ValueError("chunk length t must be positive")
    if duration <= 0:
        raise ValueError("clip duration must be positive")
    events = sorted(events, key=lambda e: e.onset)
    for prev, cur in zip(events, events[1:]):
        if cur.onset < prev.offset:
            raise ValueError("events must be non-overlapping")
    if events and events[-1].offset > duration + 1e-9:
        raise ValueError("event extends past the clip duration")

    chunks: list[ChunkPlan] = []
    start = 0.0
    index = 0
    max_iter = 2 * (int(duration / t) + len(events) + 2)
    for _ in range(max_iter):
        end = start + t
        in_events: list[Event] = []
        spans: list[DontCareSpan] = []
        warnings: list[str] = []
        next_start = end

        for e in events:
            if e.offset <= start or e.onset >= end:
                continue
            if e.onset >= start and e.offset <= end:
                in_events.append(e)
            elif e.onset > start:  # runs past the chunk end
                if e.duration <= t:
                    # restart the next chunk at the onset; mask the fragment
                    spans.append(DontCareSpan(e.onset, end, e.label))
                    next_start = e.onset
                else:
                    # longer than a whole chunk: cannot be preserved anywhere
                    in_events.append(Event(e.onset, end, e.label))
                    warnings.append(
                        f"event ({e.onset:.3f}, {e.offset:.3f}, "
                        f"{e.label.name}) is longer than the chunk length "
                        f"{t:g} s and was truncated at {end:.3f} s"
                    )
            else:
                # continues from a previous chunk (only after a loop-break)
                clipped_off = min(e.offset, end)
                in_events.append(Event(start, clipped_off, e.label))
                warnings.append(
                    f"event ({e.onset:.3f}, {e.offset:.3f}, {e.label.name}) "
                    f"continues into this chunk; clipped to "
                    f"[{start:.3f}, {clipped_off:.3f})"
                )

        chunks.append(
            ChunkPlan(
                clip_id=clip_id,
                index=index,
                start=start,
                length=t,
                audio_end=min(end, duration),
                dont_care_spans=tuple(spans),
                events=tuple(sorted(in_events, key=lambda e: e.onset)),
                warnings=tuple(warnings),
            )
        )
        if end >= duration:
            return chunks
        assert next_start > start
        start = next_start
        index += 1
    raise RuntimeError("plan_chunks failed to terminate")  # pragma: no cover


def rasterize(
    chunk: ChunkPlan,
    frame_hop_seconds: float,
    n_frames: int,
    n_audio_frames: int | None = None,
) -> FrameLabels:
    """Per-frame targets for a chunk on a grid of ``n_frames`` frames.

    Frame ``i`` represents the chunk-relative interval
    [i*hop, (i+1)*hop); it takes the label of whatever covers its center.
    ``n_audio_frames`` is the number of frames actually backed by audio
    (the feature matrix width before padding); the rest are pad frames.
    """
    if n_audio_frames is None:
        n_audio_frames = n_frames
    if not 0 <= n_audio_frames <= n_frames:
        raise ValueError("n_audio_frames must be in [0, n_frames]")
    centers = chunk.start + (np.arange(n_frames) + 0.5) * frame_hop_seconds
    class_ids = np.full(n_frames, BACKGROUND, dtype=np.int8)
    kind = np.full(n_frames, VALID, dtype=np.uint8)

    for e in chunk.events:
        class_ids[(centers >= e.onset) & (centers < e.offset)] = int(e.label)
    for s in chunk.dont_care_spans:
        sel = (centers >= s.start) & (centers < s.end)
        class_ids[sel] = int(s.label)
        kind[sel] = TRUNCATED
    # pads win over everything: there is no audio behind them
    class_ids[n_audio_frames:] = BACKGROUND
    kind[n_audio_frames:] = PAD
    return FrameLabels(class_ids, kind)


def labels_from_track(
    events: list[Event] | tuple[Event, ...],
    frame_hop_seconds: float,
    n_frames: int,
) -> np.ndarray:
    """Whole-clip frame labels (no masking) by the same frame-center rule."""
    centers = (np.arange(n_frames) + 0.5) * frame_hop_seconds
    out = np.full(n_frames, BACKGROUND, dtype=np.int8)
    for e in events:
        out[(centers >= e.onset) & (centers < e.offset)] = int(e.label)
    return out


def padded_frame_target(t: float, samples_per_second: int, window_length: int,
                        hop: int, depth: int) -> int:
    """Frame count all chunks are padded to: the frames a full t-second chunk
    yields, rounded up to a multiple of 2**depth so repeated halving is exact.

    The +1 sample guards against float rounding of chunk sample boundaries.
    """
    n_samples = int(round(t * samples_per_second)) + 1
    if n_samples < window_length:
        n = 1
    else:
        n = (n_samples - window_length) // hop + 1
    block = 2 ** depth
    return ((n + block - 1) // block) * block


def chunk_plans_to_json(chunks: list[ChunkPlan]) -> str:
    docs = []
    for c in chunks:
        docs.append({
            "clip_id": c.clip_id,
            "k": c.index,
            "start": c.start,
            "length": c.length,
            "audio_end": c.audio_end,
            "dont_care_spans": [
                {"start": s.start, "end": s.end, "label": CLASS_CODES[s.label]}
                for s in c.dont_care_spans
            ],
            "events": [
                {"onset": e.onset, "offset": e.offset,
                 "label": CLASS_CODES[e.label]}
                for e in c.events
            ],
            "warnings": list(c.warnings),
        })
    return json.dumps(docs, indent=2)


def chunk_plans_from_json(text: str) -> list[ChunkPlan]:
    chunks = []
    for d in json.loads(text):
        chunks.append(
            ChunkPlan(
                clip_id=d["clip_id"],
                index=d["k"],
                start=d["start"],
                length=d["length"],
                audio_end=d["audio_end"],
                dont_care_spans=tuple(
                    DontCareSpan(s["start"], s["end"], class_from_string(s["label"]))
                    for s in d["dont_care_spans"]
                ),
                events=tuple(
                    Event(e["onset"], e["offset"], class_from_string(e["label"]))
                    for e in d["events"]
                ),
                warnings=tuple(d.get("warnings", ())),
            )
        )
    return chunks

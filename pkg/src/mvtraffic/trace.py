"""Frame-size trace model, canonical text format, validation and synthesis.

A trace holds the encoded size (bytes) and optionally the luminance PSNR of
every frame of every view of one encoding of one video.  Frame indices and
view indices are 1-based throughout.

Canonical file layout::

    #!video=monsters
    #!representation=MV
    #!views=2
    #!frames=3
    #!fps=24.0
    #!gop=16
    #!pattern=B1
    #!qp=28
    1,1,I,51234,41.2
    1,2,P,20011,40.9
    ...
"""

from __future__ import annotations

import enum
import io
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import IO, Iterator, Mapping, Sequence

import numpy as np


class Representation(str, enum.Enum):
    MV = "MV"
    FS = "FS"
    SBS = "SBS"


class GopPattern(str, enum.Enum):
    B1 = "B1"
    B7 = "B7"
    OTHER = "other"


FRAME_TYPES = ("I", "P", "B", "U")


class TraceFormatError(ValueError):
    """Malformed or inconsistent trace text."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TraceValidationError(ValueError):
    def __init__(self, violations: Sequence["Violation"]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


@dataclass(frozen=True)
class Violation:
    field: str
    location: str
    rule: str

    def __str__(self) -> str:
        return f"{self.field} at {self.location}: {self.rule}"


@dataclass(frozen=True)
class TraceMeta:
    video_name: str
    representation: Representation
    num_views: int
    num_frames: int
    frame_rate: float
    gop_length: int
    gop_pattern: GopPattern
    quantizer: int | None = None


@dataclass(frozen=True)
class FrameRecord:
    frame_index: int
    view: int
    frame_type: str
    size: int
    psnr: float | None = None


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MultiviewTrace:
    """Per-view frame sizes of one encoding.

    ``sizes[v-1][m-1]`` is the size in bytes of frame ``m`` of view ``v``;
    ``types`` holds one frame-type string per view (one char per frame);
    ``psnr`` is None when no frame carries PSNR, otherwise per-view float
    arrays with NaN marking an absent value.
    """

    meta: TraceMeta
    sizes: tuple[np.ndarray, ...]
    types: tuple[str, ...]
    psnr: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "sizes",
            tuple(_frozen(np.array(s, dtype=np.int64)) for s in self.sizes))
        object.__setattr__(self, "types", tuple(str(t) for t in self.types))
        if self.psnr is not None:
            object.__setattr__(
                self, "psnr",
                tuple(_frozen(np.array(p, dtype=np.float64)) for p in self.psnr))

    @property
    def V(self) -> int:
        return len(self.sizes)

    @property
    def M(self) -> int:
        return self.meta.num_frames

    def view_sizes(self, v: int) -> np.ndarray:
        if not 1 <= v <= self.V:
            raise IndexError(f"view {v} out of range 1..{self.V}")
        return self.sizes[v - 1]

    def has_psnr(self) -> bool:
        return self.psnr is not None and not any(np.isnan(p).any() for p in self.psnr)

    def records(self) -> Iterator[FrameRecord]:
        """Frame records in (frame_index, view) order."""
        length = max((len(s) for s in self.sizes), default=0)
        for m in range(length):
            for v in range(self.V):
                if m >= len(self.sizes[v]):
                    continue
                p = None
                if self.psnr is not None and not math.isnan(self.psnr[v][m]):
                    p = float(self.psnr[v][m])
                t = self.types[v][m] if m < len(self.types[v]) else "U"
                yield FrameRecord(m + 1, v + 1, t, int(self.sizes[v][m]), p)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MultiviewTrace):
            return NotImplemented
        if self.meta != other.meta or self.types != other.types:
            return False
        if len(self.sizes) != len(other.sizes):
            return False
        if not all(np.array_equal(a, b) for a, b in zip(self.sizes, other.sizes)):
            return False
        if (self.psnr is None) != (other.psnr is None):
            return False
        if self.psnr is not None:
            return all(np.array_equal(a, b, equal_nan=True)
                       for a, b in zip(self.psnr, other.psnr))
        return True

    __hash__ = None  # type: ignore[assignment]


def validate(trace: MultiviewTrace) -> list[Violation]:
    """Return every invariant violation found in ``trace`` (empty when valid)."""
    out: list[Violation] = []
    meta = trace.meta
    if meta.num_views < 1:
        out.append(Violation("num_views", "meta", "must be >= 1"))
    if meta.num_frames < 1:
        out.append(Violation("num_frames", "meta", "must be >= 1"))
    if not (meta.frame_rate > 0 and math.isfinite(meta.frame_rate)):
        out.append(Violation("frame_rate", "meta", "must be finite and > 0"))
    if meta.gop_length < 1:
        out.append(Violation("gop_length", "meta", "must be >= 1"))
    rep = meta.representation
    if rep == Representation.MV and meta.num_views != 2:
        out.append(Violation("num_views", "meta", "MV traces must have 2 views"))
    elif rep == Representation.SBS and meta.num_views != 1:
        out.append(Violation("num_views", "meta", "SBS traces must have 1 view"))
    elif rep == Representation.FS and meta.num_views not in (1, 2):
        out.append(Violation("num_views", "meta", "FS traces must have 1 or 2 views"))
    if trace.V != meta.num_views:
        out.append(Violation("views", "trace",
                             f"{trace.V} views stored but header declares {meta.num_views}"))

    lengths = [len(s) for s in trace.sizes]
    if len(set(lengths)) > 1:
        desc = ", ".join(f"v={v + 1}: {n}" for v, n in enumerate(lengths))
        out.append(Violation("frames", f"views ({desc})",
                             "all views must have the same frame count"))
    for v, n in enumerate(lengths, start=1):
        if n != meta.num_frames and len(set(lengths)) == 1:
            out.append(Violation("frames", f"v={v}",
                                 f"{n} frames stored but header declares {meta.num_frames}"))
        if v > len(trace.types) or len(trace.types[v - 1]) != n:
            out.append(Violation("frame_type", f"v={v}", "one frame type per frame"))

    for v, s in enumerate(trace.sizes, start=1):
        for m in np.flatnonzero(s < 0):
            out.append(Violation("size", f"(m={m + 1}, v={v})", "must be >= 0"))
    for v, t in enumerate(trace.types, start=1):
        for m, c in enumerate(t, start=1):
            if c not in FRAME_TYPES:
                out.append(Violation("frame_type", f"(m={m}, v={v})",
                                     f"must be one of {'/'.join(FRAME_TYPES)}"))
    if trace.psnr is not None:
        if len(trace.psnr) != trace.V:
            out.append(Violation("psnr", "trace", "one PSNR column per view"))
        for v, p in enumerate(trace.psnr, start=1):
            if v > trace.V or len(p) != len(trace.sizes[v - 1]):
                out.append(Violation("psnr", f"v={v}", "one PSNR value per frame"))
            bad = ~np.isnan(p) & ~(np.isfinite(p) & (p > 0))
            for m in np.flatnonzero(bad):
                out.append(Violation("psnr", f"(m={m + 1}, v={v})", "must be finite and > 0"))
    return out


# ---------------------------------------------------------------------------
# canonical text format

_HEADER_KEYS = {
    "video": "video_name",
    "representation": "representation",
    "views": "num_views",
    "frames": "num_frames",
    "fps": "frame_rate",
    "gop": "gop_length",
    "pattern": "gop_pattern",
    "qp": "quantizer",
}
_OPTIONAL = {"quantizer"}


def _coerce_meta_value(name: str, raw, line: int | None = None):
    try:
        if name == "representation":
            return Representation(raw)
        if name == "gop_pattern":
            return GopPattern(raw)
        if name in ("num_views", "num_frames", "gop_length", "quantizer"):
            if isinstance(raw, str):
                return int(raw.strip())
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError(raw)
            return int(raw)
        if name == "frame_rate":
            return float(raw)
        return str(raw)
    except ValueError:
        raise TraceFormatError(f"bad value {raw!r} for header field {name}", line) from None


def parse_trace(source: str | IO[str], meta_overrides: Mapping | None = None) -> MultiviewTrace:
    """Parse canonical trace text (a string or text stream).

    ``meta_overrides`` maps TraceMeta field names (or header keys) to values
    and takes precedence over the file header.  Raises TraceFormatError on
    malformed input and TraceValidationError when the parsed trace breaks an
    invariant.
    """
    if isinstance(source, str):
        source = io.StringIO(source)

    header: dict[str, object] = {}
    rows: dict[tuple[int, int], tuple[str, int, float]] = {}
    any_psnr = False
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#!"):
            key, sep, value = line[2:].partition("=")
            key = key.strip()
            if not sep or key not in _HEADER_KEYS:
                raise TraceFormatError(f"bad header line {line!r}", lineno)
            name = _HEADER_KEYS[key]
            header[name] = _coerce_meta_value(name, value.strip(), lineno)
            continue
        if line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (4, 5):
            raise TraceFormatError(f"expected 4 or 5 fields, got {len(parts)}", lineno)
        try:
            m, v = int(parts[0]), int(parts[1])
            size = int(parts[3])
        except ValueError:
            raise TraceFormatError(f"non-integer field in {line!r}", lineno) from None
        ftype = parts[2].upper()
        if ftype == "UNKNOWN":
            ftype = "U"
        if ftype not in FRAME_TYPES:
            raise TraceFormatError(f"unknown frame type {parts[2]!r}", lineno)
        if size < 0:
            raise TraceFormatError(f"negative size {size}", lineno)
        if m < 1 or v < 1:
            raise TraceFormatError("frame and view indices start at 1", lineno)
        psnr = math.nan
        if len(parts) == 5 and parts[4] != "":
            try:
                psnr = float(parts[4])
            except ValueError:
                raise TraceFormatError(f"bad psnr {parts[4]!r}", lineno) from None
            if not (math.isfinite(psnr) and psnr > 0):
                raise TraceFormatError(f"psnr must be finite and > 0, got {parts[4]}", lineno)
            any_psnr = True
        if (m, v) in rows:
            raise TraceFormatError(f"duplicate record for frame {m}, view {v}", lineno)
        rows[(m, v)] = (ftype, size, psnr)

    for key, value in (meta_overrides or {}).items():
        name = _HEADER_KEYS.get(key, key)
        if name not in _HEADER_KEYS.values():
            raise TraceFormatError(f"unknown metadata field {key!r}")
        header[name] = _coerce_meta_value(name, value)
    missing = [f.name for f in fields(TraceMeta) if f.name not in header and f.name not in _OPTIONAL]
    if missing:
        raise TraceFormatError(f"missing mandatory header fields: {', '.join(missing)}")
    meta = TraceMeta(**header)  # type: ignore[arg-type]

    V, M = meta.num_views, meta.num_frames
    per_view: dict[int, list[int]] = {}
    for (m, v) in rows:
        per_view.setdefault(v, []).append(m)
    for v in per_view:
        if v > V:
            raise TraceFormatError(f"view {v} exceeds declared views={V}")
    counts = {v: len(per_view.get(v, [])) for v in range(1, V + 1)}
    if len(set(counts.values())) > 1:
        desc = ", ".join(f"view {v}: {n}" for v, n in counts.items())
        raise TraceFormatError(f"inconsistent frame counts across views ({desc})")
    for v, ms in per_view.items():
        if max(ms) > M or len(ms) != M:
            raise TraceFormatError(
                f"view {v} has frames 1..{max(ms)} ({len(ms)} records) but header declares frames={M}")

    sizes = np.zeros((V, M), dtype=np.int64)
    psnr = np.full((V, M), np.nan)
    types = [["U"] * M for _ in range(V)]
    for (m, v), (ftype, size, p) in rows.items():
        sizes[v - 1, m - 1] = size
        psnr[v - 1, m - 1] = p
        types[v - 1][m - 1] = ftype
    trace = MultiviewTrace(
        meta=meta,
        sizes=tuple(sizes),
        types=tuple("".join(t) for t in types),
        psnr=tuple(psnr) if any_psnr else None,
    )
    violations = validate(trace)
    if violations:
        raise TraceValidationError(violations)
    return trace


def serialize_trace(trace: MultiviewTrace) -> str:
    """Render ``trace`` in the canonical format; parse_trace inverts this exactly."""
    meta = trace.meta
    out = io.StringIO()
    out.write(f"#!video={meta.video_name}\n")
    out.write(f"#!representation={meta.representation.value}\n")
    out.write(f"#!views={meta.num_views}\n")
    out.write(f"#!frames={meta.num_frames}\n")
    out.write(f"#!fps={float(meta.frame_rate)!r}\n")
    out.write(f"#!gop={meta.gop_length}\n")
    out.write(f"#!pattern={meta.gop_pattern.value}\n")
    if meta.quantizer is not None:
        out.write(f"#!qp={meta.quantizer}\n")
    for r in trace.records():
        if r.psnr is None:
            out.write(f"{r.frame_index},{r.view},{r.frame_type},{r.size}\n")
        else:
            out.write(f"{r.frame_index},{r.view},{r.frame_type},{r.size},{r.psnr!r}\n")
    return out.getvalue()


def read_trace(path: str | Path, meta_overrides: Mapping | None = None) -> MultiviewTrace:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh, meta_overrides)


def write_trace(trace: MultiviewTrace, path: str | Path) -> None:
    Path(path).write_text(serialize_trace(trace), encoding="utf-8")


# ---------------------------------------------------------------------------
# synthesis

@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a seeded synthetic trace.

    Frame sizes are log-normal per frame type: ``location`` is the median
    size in bytes and ``dispersion`` the standard deviation of the log size.
    Views 2..V are scaled by ``view_scale``.  PSNR is drawn from a normal
    distribution when ``psnr_mean`` is set.
    """

    frames: int
    views: int = 2
    fps: float = 24.0
    gop: int = 16
    pattern: GopPattern = GopPattern.B1
    size_params: Mapping[str, tuple[float, float]] = field(default_factory=lambda: {
        "I": (60000.0, 0.3), "P": (25000.0, 0.5), "B": (9000.0, 0.6)})
    view_scale: float = 1.0
    psnr_mean: float | None = None
    psnr_sd: float = 0.0
    video_name: str = "synthetic"
    representation: Representation | None = None
    quantizer: int | None = None

    def check(self) -> None:
        if self.frames < 1 or self.views < 1 or self.gop < 1:
            raise ValueError("frames, views and gop must be >= 1")
        if not self.fps > 0:
            raise ValueError("fps must be > 0")
        for t in ("I", "P", "B"):
            if t not in self.size_params:
                raise ValueError(f"missing size parameters for {t} frames")
            loc, disp = self.size_params[t]
            if not loc > 0 or disp < 0:
                raise ValueError(f"{t} frames: location must be > 0 and dispersion >= 0")
        if not 0 < self.view_scale <= 1:
            raise ValueError("view_scale must be in (0, 1]")
        if self.psnr_mean is not None and (not self.psnr_mean > 0 or self.psnr_sd < 0):
            raise ValueError("psnr_mean must be > 0 and psnr_sd >= 0")

    @classmethod
    def from_dict(cls, d: Mapping) -> "SynthSpec":
        d = dict(d)
        if "pattern" in d:
            d["pattern"] = GopPattern(d["pattern"])
        if d.get("representation") is not None:
            d["representation"] = Representation(d["representation"])
        if "size_params" in d:
            sp = {}
            for k, v in d["size_params"].items():
                if isinstance(v, Mapping):
                    sp[k] = (float(v["location"]), float(v["dispersion"]))
                else:
                    sp[k] = (float(v[0]), float(v[1]))
            d["size_params"] = sp
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def gop_frame_types(M: int, G: int, pattern: GopPattern) -> str:
    """Frame-type string for M frames: I at every GoP start, then B/P runs."""
    n_b = {GopPattern.B1: 1, GopPattern.B7: 7}.get(pattern, 0)
    out = []
    for m in range(M):
        k = m % G
        if k == 0:
            out.append("I")
        elif k % (n_b + 1) == 0:
            out.append("P")
        else:
            out.append("B")
    return "".join(out)


def synthesize_trace(spec: SynthSpec, seed: int) -> MultiviewTrace:
    spec.check()
    rng = np.random.default_rng(seed)
    M, V = spec.frames, spec.views
    types = gop_frame_types(M, spec.gop, spec.pattern)
    codes = np.frombuffer(types.encode("ascii"), dtype=np.uint8)
    loc = np.empty(M)
    disp = np.empty(M)
    for t in ("I", "P", "B"):
        mask = codes == ord(t)
        loc[mask], disp[mask] = spec.size_params[t]

    sizes = []
    psnr = [] if spec.psnr_mean is not None else None
    for v in range(V):
        z = rng.standard_normal(M)
        raw = loc * np.exp(disp * z)
        if v > 0:
            raw = raw * spec.view_scale
        sizes.append(np.rint(raw).astype(np.int64))
        if psnr is not None:
            p = spec.psnr_mean + spec.psnr_sd * rng.standard_normal(M)
            psnr.append(np.maximum(p, 1.0))

    rep = spec.representation
    if rep is None:
        rep = Representation.MV if V == 2 else Representation.SBS
    meta = TraceMeta(
        video_name=spec.video_name, representation=rep, num_views=V, num_frames=M,
        frame_rate=float(spec.fps), gop_length=spec.gop, gop_pattern=spec.pattern,
        quantizer=spec.quantizer)
    trace = MultiviewTrace(meta, tuple(sizes), (types,) * V,
                           tuple(psnr) if psnr is not None else None)
    violations = validate(trace)
    if violations:
        raise TraceValidationError(violations)
    return trace


def with_meta(trace: MultiviewTrace, **changes) -> MultiviewTrace:
    return replace(trace, meta=replace(trace.meta, **changes))

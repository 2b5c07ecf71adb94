"""Feature encoding for event sequences.

Real variables are Winsorized to their robust [p2, p98] range and
standardized with mean/std estimated on the interior of that range.
Ordinal variables use unary (thermometer) coding: level l of k becomes
l-1 leading ones in a (k-1)-bit vector.  Per-event counts and time gaps
are binned and thermometer-coded the same way.  Missing variables are
zero-filled.

A codec is fitted on training sequences only and is immutable afterwards;
``featurize`` maps any sequence to a T x d matrix with the codec's fixed
width d.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import EventSequence

COUNT_BOUNDS = (1.0, 2.0, 4.0)
TIME_GAP_BOUNDS = (0.5, 2.0, 8.0, 24.0, 72.0)


class UnfitVariableError(ValueError):
    """A variable had no observed training values to fit on."""


@dataclass(frozen=True)
class RobustStats:
    """Percentile clamp bounds plus interior mean/std for one real variable."""

    p2: float
    p98: float
    mu: float
    sigma: float


@dataclass(frozen=True)
class OrdinalSpec:
    """Ordered real levels of an ordinal variable."""

    levels: tuple[float, ...]

    def __post_init__(self):
        if len(self.levels) < 1 or np.any(np.diff(self.levels) <= 0):
            raise ValueError("ordinal levels must be strictly increasing")

    @property
    def k(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class VariableSpec:
    """Schema entry: what a raw variable is, before fitting.

    ``levels`` may be omitted for ordinals, in which case they are inferred
    from the distinct observed training values.
    """

    kind: str
    levels: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("real", "ordinal"):
            raise ValueError(f"kind must be 'real' or 'ordinal', got {self.kind!r}")


def fit_robust_stats(values) -> RobustStats:
    """Fit clamp bounds and interior moments from observed values.

    Percentiles use linear interpolation between order statistics; the
    mean/std come from values inside [p2, p98].  A near-zero std falls
    back to 1 so constant variables standardize to 0.
    """
    vals = np.asarray(values, dtype=np.float64).reshape(-1)
    if vals.size == 0:
        raise UnfitVariableError("no observed values to fit")
    p2, p98 = np.percentile(vals, [2.0, 98.0])
    interior = vals[(vals >= p2) & (vals <= p98)]
    mu = float(interior.mean())
    sigma = float(interior.std())
    if sigma < 1e-8:
        sigma = 1.0
    return RobustStats(p2=float(p2), p98=float(p98), mu=mu, sigma=sigma)


def transform_real(value, stats: RobustStats):
    """Winsorize into [p2, p98], then standardize."""
    clamped = np.clip(value, stats.p2, stats.p98)
    return (clamped - stats.mu) / stats.sigma


def unary_encode(level: int, k: int) -> np.ndarray:
    """Thermometer code: level l of k becomes l-1 leading ones in k-1 bits."""
    if not 1 <= level <= k:
        raise ValueError(f"level must be in [1, {k}], got {level}")
    bits = np.zeros(k - 1)
    bits[: level - 1] = 1.0
    return bits


def _bin_index(values, bounds) -> np.ndarray:
    # 1-based bin: 1 + number of boundaries strictly below the value
    return 1 + np.searchsorted(np.asarray(bounds), values, side="left")


def encode_count(c: int, bounds: Sequence[float] = COUNT_BOUNDS) -> np.ndarray:
    """Bin a merge count into (0,1], (1,2], (2,4], (4,inf) and thermometer-code.

    Count 0 (an empty grid cell) shares the first bin.
    """
    if c < 0:
        raise ValueError(f"count must be >= 0, got {c}")
    return unary_encode(int(_bin_index(c, bounds)), len(bounds) + 1)


def encode_time_gap(dt: float, bounds: Sequence[float] = TIME_GAP_BOUNDS) -> np.ndarray:
    """Bin a gap to the previous event (hours) and thermometer-code it."""
    if dt < 0:
        raise ValueError(f"time gap must be >= 0, got {dt}")
    return unary_encode(int(_bin_index(dt, bounds)), len(bounds) + 1)


@dataclass(frozen=True)
class FeatureCodec:
    """Fitted, immutable event-to-vector encoder.

    Per variable: a real variable contributes one standardized slot, an
    ordinal one k-1 thermometer bits.  Every event additionally carries
    count bits and time-gap bits.
    """

    kinds: tuple[str, ...]
    stats: tuple[RobustStats | None, ...]
    ordinals: tuple[OrdinalSpec | None, ...]
    count_bounds: tuple[float, ...] = COUNT_BOUNDS
    time_bounds: tuple[float, ...] = TIME_GAP_BOUNDS

    @property
    def r(self) -> int:
        return len(self.kinds)

    @property
    def width(self) -> int:
        d = 0
        for kind, spec in zip(self.kinds, self.ordinals):
            d += 1 if kind == "real" else spec.k - 1
        return d + len(self.count_bounds) + len(self.time_bounds)


def fit_codec(
    schema: Sequence[VariableSpec],
    sequences: Iterable[EventSequence],
    time_bounds: Sequence[float] = TIME_GAP_BOUNDS,
) -> FeatureCodec:
    """Fit a codec on training sequences.

    This is the only constructor besides deserialization, so a codec can
    never have seen held-out data by construction.
    """
    seqs = list(sequences)
    if not seqs:
        raise ValueError("need at least one training sequence")
    r = seqs[0].r
    if len(schema) != r:
        raise ValueError(f"schema lists {len(schema)} variables, data has {r}")

    observed: list[np.ndarray] = []
    for j in range(r):
        cols = [s.x[s.mask[:, j], j] for s in seqs]
        observed.append(np.concatenate(cols) if cols else np.empty(0))

    kinds: list[str] = []
    stats: list[RobustStats | None] = []
    ordinals: list[OrdinalSpec | None] = []
    for j, spec in enumerate(schema):
        kinds.append(spec.kind)
        if spec.kind == "real":
            if observed[j].size == 0:
                raise UnfitVariableError(f"variable {j} has no observed values")
            stats.append(fit_robust_stats(observed[j]))
            ordinals.append(None)
        else:
            if spec.levels is not None:
                levels = tuple(float(v) for v in spec.levels)
            else:
                if observed[j].size == 0:
                    raise UnfitVariableError(f"variable {j} has no observed values")
                levels = tuple(float(v) for v in np.unique(observed[j]))
            stats.append(None)
            ordinals.append(OrdinalSpec(levels=levels))
    return FeatureCodec(
        kinds=tuple(kinds),
        stats=tuple(stats),
        ordinals=tuple(ordinals),
        count_bounds=tuple(float(b) for b in COUNT_BOUNDS),
        time_bounds=tuple(float(b) for b in time_bounds),
    )


def featurize_rows(
    t: np.ndarray,
    x: np.ndarray,
    mask: np.ndarray,
    c: np.ndarray,
    starts: np.ndarray,
    codec: FeatureCodec,
) -> np.ndarray:
    """Vectorized encoding core over concatenated event rows.

    ``starts`` marks where each sequence begins, so many sequences can be
    encoded in one pass; time gaps reset to 0 at sequence starts.
    """
    if x.shape[1] != codec.r:
        raise ValueError(f"sequence has r={x.shape[1]}, codec expects r={codec.r}")
    n = t.shape[0]
    out = np.zeros((n, codec.width))
    col = 0
    for j, kind in enumerate(codec.kinds):
        obs = mask[:, j]
        if kind == "real":
            out[:, col] = np.where(obs, transform_real(x[:, j], codec.stats[j]), 0.0)
            col += 1
        else:
            levels = np.asarray(codec.ordinals[j].levels)
            k = levels.shape[0]
            if k > 1:
                # nearest level, midpoint ties to the lower level
                mids = (levels[:-1] + levels[1:]) / 2.0
                idx0 = np.searchsorted(mids, x[:, j], side="left")
            else:
                idx0 = np.zeros(n, dtype=np.int64)
            thresh = np.arange(1, k)
            out[:, col : col + k - 1] = (idx0[:, None] >= thresh[None, :]) & obs[:, None]
            col += k - 1

    nb = len(codec.count_bounds)
    cbin = _bin_index(c, codec.count_bounds)
    out[:, col : col + nb] = (cbin - 1)[:, None] >= np.arange(1, nb + 1)[None, :]
    col += nb

    nb = len(codec.time_bounds)
    gaps = np.empty(n)
    gaps[0] = 0.0
    gaps[1:] = t[1:] - t[:-1]
    gaps[starts] = 0.0
    tbin = _bin_index(gaps, codec.time_bounds)
    out[:, col : col + nb] = (tbin - 1)[:, None] >= np.arange(1, nb + 1)[None, :]
    return out


def featurize(seq: EventSequence, codec: FeatureCodec) -> np.ndarray:
    """Encode a sequence as a T x d matrix.

    Unobserved reals encode as 0; unobserved ordinals as all-zero bits.
    The time gap of the first event is 0.
    """
    return featurize_rows(seq.t, seq.x, seq.mask, seq.c, np.zeros(1, dtype=np.intp), codec)


def codec_to_text(codec: FeatureCodec) -> str:
    """Flat text serialization; floats survive the round trip exactly."""
    lines = ["timegrain-codec 1"]
    lines.append(f"r {codec.r}")
    lines.append(f"d {codec.width}")
    lines.append("count_bins " + " ".join(repr(b) for b in codec.count_bounds))
    lines.append("time_bins " + " ".join(repr(b) for b in codec.time_bounds))
    for j, kind in enumerate(codec.kinds):
        if kind == "real":
            st = codec.stats[j]
            lines.append(
                f"var {j} real p2={st.p2!r} p98={st.p98!r} mu={st.mu!r} sigma={st.sigma!r}"
            )
        else:
            levels = ",".join(repr(v) for v in codec.ordinals[j].levels)
            lines.append(f"var {j} ordinal levels={levels}")
    return "\n".join(lines) + "\n"


def codec_from_text(text: str) -> FeatureCodec:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split() != ["timegrain-codec", "1"]:
        raise ValueError("not a timegrain codec document")
    fields: dict[str, str] = {}
    kinds: list[str] = []
    stats: list[RobustStats | None] = []
    ordinals: list[OrdinalSpec | None] = []
    count_bounds = COUNT_BOUNDS
    time_bounds = TIME_GAP_BOUNDS
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "count_bins":
            count_bounds = tuple(float(v) for v in parts[1:])
        elif parts[0] == "time_bins":
            time_bounds = tuple(float(v) for v in parts[1:])
        elif parts[0] == "var":
            kind = parts[2]
            kinds.append(kind)
            kv = dict(item.split("=", 1) for item in parts[3:])
            if kind == "real":
                stats.append(
                    RobustStats(
                        p2=float(kv["p2"]),
                        p98=float(kv["p98"]),
                        mu=float(kv["mu"]),
                        sigma=float(kv["sigma"]),
                    )
                )
                ordinals.append(None)
            elif kind == "ordinal":
                stats.append(None)
                ordinals.append(
                    OrdinalSpec(levels=tuple(float(v) for v in kv["levels"].split(",")))
                )
            else:
                raise ValueError(f"unknown variable kind {kind!r}")
        elif parts[0] in ("r", "d"):
            fields[parts[0]] = parts[1]
        else:
            raise ValueError(f"unknown codec line {ln!r}")
    codec = FeatureCodec(
        kinds=tuple(kinds),
        stats=tuple(stats),
        ordinals=tuple(ordinals),
        count_bounds=count_bounds,
        time_bounds=time_bounds,
    )
    if "r" in fields and int(fields["r"]) != codec.r:
        raise ValueError("codec header r disagrees with variable lines")
    if "d" in fields and int(fields["d"]) != codec.width:
        raise ValueError("codec header d disagrees with variable lines")
    return codec


def save_codec(codec: FeatureCodec, path) -> None:
    with open(path, "w") as fh:
        fh.write(codec_to_text(codec))


def load_codec(path) -> FeatureCodec:
    with open(path) as fh:
        return codec_from_text(fh.read())

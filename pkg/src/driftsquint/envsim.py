"""Deterministic, seedable loss-sequence generators.

An environment is an ordered list of segments covering rounds 1..T, each with
one generator per run of rounds: a constant loss vector, independent coins
with per-expert means, or an explicit loss table. Randomness comes from a
counter-based Philox stream keyed by the seed; the cell (t, k) always consumes
the same stream position regardless of segment layout or iteration order, so
generation is bit-reproducible and trivially parallel.

JSON schema (round-trips through read/write):

    {"n_experts": K, "horizon": T, "seed": S,
     "segments": [{"start": 1, "kind": "coin", "values": [m1, ..., mK]},
                  {"start": 129, "kind": "constant", "values": [c1, ..., cK]},
                  {"start": 200, "kind": "table", "values": [[...], ...]}]}

"coin" draws Bernoulli losses in {0, 1} with the given means, the extreme of
the [0, 1] loss range; "table" rows must cover the segment's span exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("constant", "coin", "table")


@dataclass(frozen=True)
class Segment:
    start: int
    kind: str
    values: tuple

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if self.start < 1:
            raise ValueError("segment start must be >= 1")


@dataclass(frozen=True)
class EnvironmentSpec:
    n_experts: int
    horizon: int
    segments: tuple[Segment, ...]
    seed: int = 0

    def __post_init__(self):
        if self.n_experts < 1 or self.horizon < 1:
            raise ValueError("need K >= 1 experts and T >= 1 rounds")
        if not self.segments or self.segments[0].start != 1:
            raise ValueError("segments must start at round 1")
        starts = [s.start for s in self.segments]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("segment starts must strictly increase")
        if starts[-1] > self.horizon:
            raise ValueError("segment starts beyond the horizon")
        for seg, stop in zip(self.segments, starts[1:] + [self.horizon + 1]):
            span = stop - seg.start
            vals = np.asarray(seg.values, dtype=float)
            if seg.kind == "table":
                if vals.shape != (span, self.n_experts):
                    raise ValueError(
                        f"table segment at {seg.start} needs shape ({span}, {self.n_experts})")
            elif vals.shape != (self.n_experts,):
                raise ValueError(
                    f"{seg.kind} segment at {seg.start} needs {self.n_experts} values")
            if vals.size and (vals.min() < 0.0 or vals.max() > 1.0):
                raise ValueError("segment values must lie in [0, 1]")

    def spans(self) -> list[tuple[Segment, int, int]]:
        """(segment, first round, last round) triples, 1-based inclusive."""
        starts = [s.start for s in self.segments] + [self.horizon + 1]
        return [(seg, a, b - 1) for seg, a, b in zip(self.segments, starts, starts[1:])]

    def to_json(self) -> dict:
        return {
            "n_experts": self.n_experts,
            "horizon": self.horizon,
            "seed": self.seed,
            "segments": [
                {"start": s.start, "kind": s.kind,
                 "values": np.asarray(s.values, dtype=float).tolist()}
                for s in self.segments
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "EnvironmentSpec":
        segments = tuple(
            Segment(int(s["start"]), str(s["kind"]), _freeze(s["values"]))
            for s in doc["segments"]
        )
        return cls(int(doc["n_experts"]), int(doc["horizon"]), segments,
                   int(doc.get("seed", 0)))


def _freeze(values):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        return tuple(arr.tolist())
    return tuple(tuple(row) for row in arr.tolist())


def generate(spec: EnvironmentSpec) -> np.ndarray:
    """The (T, K) loss matrix for a spec; bit-identical across calls."""
    rng = np.random.Generator(np.random.Philox(key=spec.seed))
    uniforms = rng.random((spec.horizon, spec.n_experts))
    losses = np.empty((spec.horizon, spec.n_experts))
    for seg, a, b in spec.spans():
        rows = slice(a - 1, b)
        vals = np.asarray(seg.values, dtype=float)
        if seg.kind == "constant":
            losses[rows] = vals[None, :]
        elif seg.kind == "coin":
            losses[rows] = (uniforms[rows] < vals[None, :]).astype(float)
        else:
            losses[rows] = vals
    return losses


def _coin(start, means) -> Segment:
    return Segment(start, "coin", tuple(float(m) for m in means))


def builtin_scenarios(horizon: int = 256, n_experts: int = 4,
                      seed: int = 0) -> dict[str, EnvironmentSpec]:
    """Named presets used by the acceptance runs.

    stationary     one coin segment, means spread over [0.1, 0.9]
    single-switch  means reversed once, at round T//2 + 1
    two-switch     reversal at T//3 + 1, back again at 2T//3 + 1
    drift          8 equal segments, means interpolating start to reversed end
    """
    means = np.linspace(0.1, 0.9, n_experts) if n_experts > 1 else np.array([0.4])
    flipped = means[::-1]
    half = horizon // 2
    third, two_third = horizon // 3, (2 * horizon) // 3
    scenarios = {
        "stationary": EnvironmentSpec(
            n_experts, horizon, (_coin(1, means),), seed),
        "single-switch": EnvironmentSpec(
            n_experts, horizon,
            (_coin(1, means), _coin(half + 1, flipped)), seed),
        "two-switch": EnvironmentSpec(
            n_experts, horizon,
            (_coin(1, means), _coin(third + 1, flipped), _coin(two_third + 1, means)),
            seed),
    }
    n_steps = min(8, horizon)
    bounds = [1 + (horizon * i) // n_steps for i in range(n_steps)]
    drift_segments = []
    for i, start in enumerate(bounds):
        frac = i / max(n_steps - 1, 1)
        drift_segments.append(_coin(start, (1 - frac) * means + frac * flipped))
    scenarios["drift"] = EnvironmentSpec(
        n_experts, horizon, tuple(drift_segments), seed)
    return scenarios

"""Face recognition vulnerability: comparison scores, FMR thresholds, MMPMR and FMMPMR."""
import csv
import io
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Protocol, runtime_checkable

import numpy as np

from ._io import atomic_write_text
from .errors import ProtocolError, ReportError, ValidationError
from .imaging import as_pixels
from .reference import vulnerability_reference


@runtime_checkable
class RecognitionBackend(Protocol):
    def embed(self, image) -> np.ndarray: ...

    def compare(self, u, v) -> float: ...


class DownsampledRecognition:
    """Embedding = block-averaged pixels on a ``grid`` x ``grid`` raster.

    Similarity is the negative Euclidean distance, so higher means more alike.
    """

    def __init__(self, grid=8):
        self.grid = int(grid)

    def embed(self, image):
        px = as_pixels(image)
        h, w = px.shape[:2]
        ys = np.linspace(0, h, self.grid + 1).astype(int)
        xs = np.linspace(0, w, self.grid + 1).astype(int)
        cells = [px[ys[i]:ys[i + 1], xs[j]:xs[j + 1]].mean(axis=(0, 1))
                 for i in range(self.grid) for j in range(self.grid)]
        return np.concatenate(cells)

    def compare(self, u, v):
        return -float(np.linalg.norm(np.asarray(u) - np.asarray(v)))


class MeanPixelRecognition:
    """Embedding = mean pixel value; similarity = -|difference|."""

    def embed(self, image):
        return np.array([float(as_pixels(image).mean())])

    def compare(self, u, v):
        return -float(abs(u[0] - v[0]))


class ScoreRow(NamedTuple):
    morph_id: str
    subject_id: str
    probe_id: str
    score: float


@dataclass(frozen=True)
class ScoreTable:
    rows: tuple

    def __post_init__(self):
        rows = tuple(ScoreRow(r[0], r[1], r[2], float(r[3])) for r in self.rows)
        keys = set()
        subjects = {}
        for r in rows:
            key = (r.morph_id, r.subject_id, r.probe_id)
            if key in keys:
                raise ValidationError(f"duplicate score row {key}")
            keys.add(key)
            subjects.setdefault(r.morph_id, set()).add(r.subject_id)
        for morph, subs in subjects.items():
            if len(subs) != 2:
                raise ValidationError(f"morph {morph!r} has rows for {len(subs)} subjects, expected 2")
        object.__setattr__(self, "rows", rows)

    def morph_ids(self):
        return list(dict.fromkeys(r.morph_id for r in self.rows))

    def by_morph(self):
        """``{morph: {subject: [(probe_id, score), ...]}}`` preserving row order."""
        out = {}
        for r in self.rows:
            out.setdefault(r.morph_id, {}).setdefault(r.subject_id, []).append((r.probe_id, r.score))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["morph_id", "subject_id", "probe_id", "score"])
        for r in self.rows:
            writer.writerow([r.morph_id, r.subject_id, r.probe_id, repr(r.score)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != ["morph_id", "subject_id", "probe_id", "score"]:
            raise ValidationError(f"unexpected score table header {header}")
        return cls(tuple(ScoreRow(m, s, p, float(v)) for m, s, p, v in reader))


@dataclass(frozen=True)
class Threshold:
    tau: float
    achieved_fmr: float
    target_fmr: float


@dataclass(frozen=True)
class MorphSample:
    morph_id: str
    image: object
    subjects: tuple          # (identity a, identity b)
    sources: tuple = ()      # image ids the morph was made from


def score_morphs(morphs, probes, backend) -> ScoreTable:
    """Compare every morph against every probe of both contributing subjects.

    ``probes`` maps identity -> list of ``(probe_id, image)``.
    """
    cache = {}

    def embedding(probe_id, image):
        if probe_id not in cache:
            cache[probe_id] = backend.embed(image)
        return cache[probe_id]

    rows = []
    for m in morphs:
        emb = backend.embed(m.image)
        for subject in m.subjects:
            plist = probes.get(subject, [])
            if not plist:
                raise ProtocolError(f"no probes for subject {subject!r} of morph {m.morph_id!r}")
            for probe_id, image in plist:
                if probe_id in m.sources:
                    raise ProtocolError(f"probe {probe_id!r} was used to create morph {m.morph_id!r}")
                rows.append(ScoreRow(m.morph_id, subject, probe_id,
                                     float(backend.compare(emb, embedding(probe_id, image)))))
    return ScoreTable(tuple(rows))


def imposter_scores(images_by_identity, backend):
    """Scores of all cross-identity comparisons between the given images."""
    items = [(ident, backend.embed(img)) for ident in sorted(images_by_identity)
             for img in images_by_identity[ident]]
    return [float(backend.compare(u, v)) for (ia, u), (ib, v) in itertools.combinations(items, 2) if ia != ib]


def fmr_threshold(imposter, target_fmr=0.001) -> Threshold:
    """Smallest score ``tau`` with at most ``target_fmr`` of imposters strictly above it."""
    scores = np.sort(np.asarray(imposter, dtype=np.float64))
    if scores.size == 0:
        raise ValidationError("no imposter scores")
    if not 0.0 < target_fmr < 1.0:
        raise ValidationError("target_fmr must lie in (0, 1)")
    n = scores.size
    candidates = np.unique(scores)
    above = n - np.searchsorted(scores, candidates, side="right")
    # the target is read as the decimal it prints as (0.001 means 1/1000), so
    # an FMR of exactly 3/10 meets a 0.3 target despite binary rounding
    allowed = math.floor(Fraction(repr(float(target_fmr))) * n)
    idx = int(np.argmax(above <= allowed))
    return Threshold(float(candidates[idx]), float(above[idx] / n), float(target_fmr))


def _aggregate(values, how):
    if how == "max":
        return max(values)
    if how == "mean":
        return float(np.mean(values))
    raise ValidationError(f"unknown aggregation {how!r}")


def mmpmr(table: ScoreTable, tau, aggregate="max") -> float:
    """Fraction of morphs whose aggregated score exceeds ``tau`` for both subjects."""
    groups = table.by_morph()
    if not groups:
        return 0.0
    hits = 0
    for subjects in groups.values():
        per_subject = [_aggregate([s for _, s in scores], aggregate) for scores in subjects.values()]
        if min(per_subject) > tau:
            hits += 1
    return hits / len(groups)


def paired_attempts(table: ScoreTable):
    """Per morph, probe scores of the two subjects paired by probe index.

    Probes are ordered by id within each subject; the longer list is truncated.
    """
    out = []
    for subjects in table.by_morph().values():
        s1, s2 = (sorted(v) for v in subjects.values())
        out.append([(a[1], b[1]) for a, b in zip(s1, s2)])
    return out


def fmmpmr(attempts, tau) -> float:
    """Fraction of paired attempts where the morph beats ``tau`` for both subjects."""
    flat = [pair for morph in attempts for pair in morph]
    if any(len(morph) == 0 for morph in attempts) or not flat:
        raise ValidationError("every morph needs at least one paired attempt")
    return sum(1 for s1, s2 in flat if s1 > tau and s2 > tau) / len(flat)


def scatter_points(table: ScoreTable):
    """Per morph, the best score against each of its two subjects."""
    return [[max(s for _, s in scores) for scores in subjects.values()]
            for subjects in table.by_morph().values()]


REPORT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["attack", "backend", "tau", "mmpmr", "fmmpmr", "scatter"],
    "properties": {
        "attack": {"type": "string"},
        "backend": {"type": "string"},
        "tau": {"type": "number"},
        "achieved_fmr": {"type": "number", "minimum": 0, "maximum": 1},
        "target_fmr": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "mmpmr": {"type": "number", "minimum": 0, "maximum": 1},
        "fmmpmr": {"type": "number", "minimum": 0, "maximum": 1},
        "percent": {"type": "object", "properties": {"mmpmr": {"type": "number"}, "fmmpmr": {"type": "number"}},
                    "required": ["mmpmr", "fmmpmr"], "additionalProperties": False},
        "n_morphs": {"type": "integer", "minimum": 0},
        "morph_ids": {"type": "array", "items": {"type": "string"}},
        "scatter": {"type": "array", "items": {"type": "array", "items": {"type": "number"},
                                               "minItems": 2, "maxItems": 2}},
        "seed": {"type": ["integer", "null"]},
        "reference": {"type": "object"},
    },
}


def vulnerability_report(tables, thresholds, seed=None):
    """One report per (attack, backend).

    ``tables`` maps attack -> backend -> ScoreTable; ``thresholds`` maps
    backend -> Threshold derived from that backend's imposter scores.
    """
    reports = []
    for attack in sorted(tables):
        for backend in sorted(tables[attack]):
            if backend not in thresholds:
                raise ReportError(f"no threshold for backend {backend!r}")
            table = tables[attack][backend]
            thr = thresholds[backend]
            rate = mmpmr(table, thr.tau)
            frate = fmmpmr(paired_attempts(table), thr.tau) if table.rows else 0.0
            reports.append({
                "attack": attack,
                "backend": backend,
                "tau": thr.tau,
                "achieved_fmr": thr.achieved_fmr,
                "target_fmr": thr.target_fmr,
                "mmpmr": rate,
                "fmmpmr": frate,
                "percent": {"mmpmr": 100.0 * rate, "fmmpmr": 100.0 * frate},
                "n_morphs": len(table.morph_ids()),
                "morph_ids": table.morph_ids(),
                "scatter": scatter_points(table),
                "seed": seed,
                "reference": vulnerability_reference(),
            })
    return reports


def write_scatter_csv(report, path):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["morph_id", "score_subject1", "score_subject2", "tau"])
    ids = report.get("morph_ids") or [str(i) for i in range(len(report["scatter"]))]
    for mid, (s1, s2) in zip(ids, report["scatter"]):
        writer.writerow([mid, repr(float(s1)), repr(float(s2)), repr(float(report["tau"]))])
    return atomic_write_text(path, buf.getvalue())

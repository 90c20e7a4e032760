"""Random instance generators shared by unit and acceptance tests."""
import numpy as np

from morphforge.frs_vuln import ScoreRow, ScoreTable


def quad_points(rng, size=16, margin=3.0):
    """Four points near the corners of a ``size`` square: a convex quad, i.e. two triangles."""
    corners = np.array([[0.0, 0.0], [size - 1, 0.0], [size - 1, size - 1], [0.0, size - 1]])
    return corners + rng.uniform(-margin, margin, (4, 2)) * np.sign(np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]]))


def two_triangle_case(rng, size=16):
    img_a = rng.random((size, size, 3))
    img_b = rng.random((size, size, 3))
    return img_a, quad_points(rng, size), img_b, quad_points(rng, size), float(rng.uniform(0.0, 1.0))


def random_score_table(rng, max_morphs=50, max_probes=4, quantize=None):
    """Score table with 1..max_morphs morphs and 1..max_probes probes per subject.

    ``quantize`` rounds scores to that many decimals so ties occur.
    """
    n = int(rng.integers(1, max_morphs + 1))
    rows = []
    for m in range(n):
        for s in ("a", "b"):
            for p in range(int(rng.integers(1, max_probes + 1))):
                score = float(rng.normal())
                if quantize is not None:
                    score = round(score, quantize)
                rows.append(ScoreRow(f"m{m}", f"m{m}{s}", f"m{m}{s}_p{p}", score))
    rng.shuffle(rows)
    return ScoreTable(tuple(rows))


def random_det_scores(rng, max_scores=100, quantize=None):
    na = int(rng.integers(1, max_scores // 2 + 1))
    nb = int(rng.integers(1, max_scores // 2 + 1))
    shift = rng.uniform(-1, 2)
    att = rng.normal(shift, 1.0, na)
    bona = rng.normal(0.0, 1.0, nb)
    if quantize is not None:
        att, bona = np.round(att, quantize), np.round(bona, quantize)
    return att.tolist(), bona.tolist()

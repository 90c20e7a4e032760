import json

import numpy as np

from morphforge.imaging import load_image, load_landmarks
from morphforge.protocol import load_manifest
from morphforge.synthetic import random_identity, render_face, sprite_set, write_synthetic_dataset


def test_render_is_seeded_and_landmarks_stay_inside():
    p = random_identity(np.random.default_rng(0))
    a, la = render_face(p, 64, rng=np.random.default_rng(1))
    b, lb = render_face(p, 64, rng=np.random.default_rng(1))
    assert a == b
    np.testing.assert_array_equal(la, lb)
    assert la.shape == (68, 2)
    assert la.min() >= 0 and la.max() <= 63


def test_sprite_set_is_deterministic():
    s1, s2 = sprite_set(3, size=16, seed=2), sprite_set(3, size=16, seed=2)
    assert all(x == y for x, y in zip(s1, s2))


def test_dataset_layout(tmp_path):
    manifest_path = write_synthetic_dataset(tmp_path, n_identities=4, size=32, n_probes=3, seed=5)
    m = load_manifest(manifest_path)
    assert len(m.identities) == 4
    assert all(len(i.by_role("probe")) == 3 for i in m.identities)
    for image_id in m.image_map:
        assert load_image(m.image_path(image_id)).size == (32, 32)
        assert load_landmarks(tmp_path / "landmarks" / f"{image_id}.json")[0] == image_id
    again = write_synthetic_dataset(tmp_path / "again", n_identities=4, size=32, n_probes=3, seed=5)
    assert json.loads(again.read_text()) == json.loads(manifest_path.read_text())
    assert (tmp_path / "images" / "id000_probe0.png").read_bytes() == \
        (tmp_path / "again" / "images" / "id000_probe0.png").read_bytes()

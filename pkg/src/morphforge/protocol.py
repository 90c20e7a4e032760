"""Dataset manifests and identity-disjoint split protocols."""
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from ._io import write_json
from .errors import MalformedManifestError, ProtocolInfeasibleError, ValidationError

MANIFEST_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["identities"],
    "properties": {
        "identities": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "images"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "images": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["id", "path", "role"],
                            "properties": {
                                "id": {"type": "string", "minLength": 1},
                                "path": {"type": "string", "minLength": 1},
                                "role": {"enum": ["reference", "probe"]},
                            },
                        },
                    },
                },
            },
        }
    },
}

PROTOCOL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["train", "test", "pairs"],
    "properties": {
        "train": {"type": "array", "items": {"type": "string"}},
        "test": {"type": "array", "items": {"type": "string"}},
        "pairs": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["a_id", "a_img", "b_id", "b_img", "split"],
                "properties": {
                    "a_id": {"type": "string"},
                    "a_img": {"type": "string"},
                    "b_id": {"type": "string"},
                    "b_img": {"type": "string"},
                    "split": {"enum": ["train", "test"]},
                },
            },
        },
    },
}

# Morph and bona fide counts of the published database; used only as a
# reference shape for validate_counts, never as a target at desk scale.
PUBLISHED_COUNTS = {
    "total_pairs": 2500,
    "train_pairs": 1190,
    "test_pairs": 1310,
    "bonafide": 1270,
    "train_bonafide": 690,
    "test_bonafide": 580,
}


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    path: str
    role: str


@dataclass(frozen=True)
class IdentityRecord:
    identity_id: str
    images: tuple

    def by_role(self, role):
        return [im for im in self.images if im.role == role]


@dataclass(frozen=True)
class DatasetManifest:
    identities: tuple
    root: Path = field(default=Path("."), compare=False)

    def __post_init__(self):
        seen_ids, seen_imgs = set(), set()
        for ident in self.identities:
            if ident.identity_id in seen_ids:
                raise ValidationError(f"duplicate identity id {ident.identity_id!r}")
            seen_ids.add(ident.identity_id)
            if not ident.by_role("reference"):
                raise ValidationError(f"identity {ident.identity_id!r} has no reference image")
            if not ident.by_role("probe"):
                raise ValidationError(f"identity {ident.identity_id!r} has no probe image")
            for im in ident.images:
                if im.image_id in seen_imgs:
                    raise ValidationError(f"duplicate image id {im.image_id!r}")
                if not im.path:
                    raise ValidationError(f"image {im.image_id!r} has an empty path")
                seen_imgs.add(im.image_id)

    @property
    def identity_map(self):
        return {ident.identity_id: ident for ident in self.identities}

    @property
    def image_map(self):
        return {im.image_id: im for ident in self.identities for im in ident.images}

    def identity_of(self, image_id):
        for ident in self.identities:
            if any(im.image_id == image_id for im in ident.images):
                return ident.identity_id
        raise KeyError(image_id)

    def image_path(self, image_id) -> Path:
        return self.root / self.image_map[image_id].path

    def to_json(self):
        return {"identities": [
            {"id": ident.identity_id,
             "images": [{"id": im.image_id, "path": im.path, "role": im.role} for im in ident.images]}
            for ident in self.identities]}

    @classmethod
    def from_json(cls, doc, root=Path(".")):
        try:
            jsonschema.validate(doc, MANIFEST_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise MalformedManifestError(f"manifest does not match schema: {exc.message}") from exc
        identities = tuple(
            IdentityRecord(ident["id"], tuple(ImageRecord(im["id"], im["path"], im["role"]) for im in ident["images"]))
            for ident in doc["identities"])
        return cls(identities, Path(root))


@dataclass(frozen=True)
class MorphPair:
    a_id: str
    a_img: str
    b_id: str
    b_img: str
    split: str

    @property
    def morph_id(self):
        return f"{self.a_img}_{self.b_img}"


@dataclass(frozen=True)
class SplitProtocol:
    train_identities: frozenset
    test_identities: frozenset
    morph_pairs: tuple

    def __post_init__(self):
        overlap = self.train_identities & self.test_identities
        if overlap:
            raise ValidationError(f"identities in both splits: {sorted(overlap)}")
        members = {"train": self.train_identities, "test": self.test_identities}
        seen = set()
        for p in self.morph_pairs:
            if p.split not in members:
                raise ValidationError(f"unknown split {p.split!r}")
            if p.a_id == p.b_id:
                raise ValidationError(f"pair {p.a_img}/{p.b_img} uses a single identity")
            if p.a_id not in members[p.split] or p.b_id not in members[p.split]:
                raise ValidationError(f"pair {p.a_id}/{p.b_id} crosses out of split {p.split!r}")
            key = frozenset((p.a_img, p.b_img))
            if key in seen:
                raise ValidationError(f"pair {p.a_img}/{p.b_img} repeated")
            seen.add(key)

    def pairs(self, split=None):
        return [p for p in self.morph_pairs if split is None or p.split == split]

    def identities(self, split):
        return self.train_identities if split == "train" else self.test_identities

    def to_json(self):
        return {
            "train": sorted(self.train_identities),
            "test": sorted(self.test_identities),
            "pairs": [{"a_id": p.a_id, "a_img": p.a_img, "b_id": p.b_id, "b_img": p.b_img, "split": p.split}
                      for p in self.morph_pairs],
        }

    @classmethod
    def from_json(cls, doc):
        try:
            jsonschema.validate(doc, PROTOCOL_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise MalformedManifestError(f"protocol does not match schema: {exc.message}") from exc
        return cls(frozenset(doc["train"]), frozenset(doc["test"]),
                   tuple(MorphPair(**p) for p in doc["pairs"]))


def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except UnicodeDecodeError as exc:
        raise MalformedManifestError(f"{path}: not UTF-8 ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise MalformedManifestError(f"{path}: invalid JSON ({exc})") from exc


def load_manifest(path) -> DatasetManifest:
    """Read and validate a manifest; image paths resolve relative to its directory."""
    path = Path(path)
    return DatasetManifest.from_json(_read_json(path), root=path.parent)


def save_manifest(manifest: DatasetManifest, path):
    return write_json(path, manifest.to_json())


def load_protocol(path) -> SplitProtocol:
    return SplitProtocol.from_json(_read_json(path))


def save_protocol(protocol: SplitProtocol, path):
    return write_json(path, protocol.to_json())


def _pair_within(ids, k, rng):
    count = {i: 0 for i in ids}
    chosen = []
    used = set()
    for ident in (ids[i] for i in rng.permutation(len(ids))):
        partners = [ids[i] for i in rng.permutation(len(ids))]
        for other in partners:
            if count[ident] >= k:
                break
            if other == ident or count[other] >= k:
                continue
            key = frozenset((ident, other))
            if key in used:
                continue
            used.add(key)
            count[ident] += 1
            count[other] += 1
            chosen.append((ident, other))
    return chosen


def build_splits(manifest: DatasetManifest, train_fraction=0.5, pairs_per_identity=1, seed=0) -> SplitProtocol:
    """Split identities into disjoint train/test sets and pair them within each split.

    Identities are shuffled with a seeded generator; each split then pairs its
    identities by a seeded shuffle, giving every identity up to
    ``pairs_per_identity`` distinct partners. Morph sources are each
    identity's first reference image.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if pairs_per_identity < 1:
        raise ValidationError("pairs_per_identity must be positive")
    ids = sorted(ident.identity_id for ident in manifest.identities)
    n = len(ids)
    n_train = int(round(train_fraction * n))
    if n < 4 or n_train < 2 or n - n_train < 2:
        raise ProtocolInfeasibleError(
            f"{n} identities cannot give two identities per split at train_fraction={train_fraction}")
    rng = np.random.default_rng(seed)
    shuffled = [ids[i] for i in rng.permutation(n)]
    train, test = sorted(shuffled[:n_train]), sorted(shuffled[n_train:])
    source = {ident.identity_id: sorted(im.image_id for im in ident.by_role("reference"))[0]
              for ident in manifest.identities}
    pairs = []
    for split, members in (("train", train), ("test", test)):
        for a, b in _pair_within(members, pairs_per_identity, rng):
            pairs.append(MorphPair(a, source[a], b, source[b], split))
    return SplitProtocol(frozenset(train), frozenset(test), tuple(pairs))


def morph_sources(protocol: SplitProtocol, split=None):
    return {img for p in protocol.pairs(split) for img in (p.a_img, p.b_img)}


def bona_fide_images(manifest: DatasetManifest, protocol: SplitProtocol, split, exclude_sources=True):
    """Image ids of split identities usable as bona fide samples."""
    used = morph_sources(protocol) if exclude_sources else set()
    members = protocol.identities(split)
    return [im.image_id for ident in manifest.identities if ident.identity_id in members
            for im in ident.images if im.image_id not in used]


def probe_images(manifest: DatasetManifest, protocol: SplitProtocol, split):
    """Probe images per identity, excluding anything used as a morph source."""
    used = morph_sources(protocol)
    members = protocol.identities(split)
    return {ident.identity_id: [im.image_id for im in ident.by_role("probe") if im.image_id not in used]
            for ident in manifest.identities if ident.identity_id in members}


def validate_counts(protocol: SplitProtocol, expected: dict, manifest: DatasetManifest = None) -> dict:
    """Compare actual pair/bona fide counts per split against ``expected``.

    ``expected`` may hold any of ``train_pairs``, ``test_pairs``,
    ``train_bonafide`` and ``test_bonafide``; bona fide counts need the
    manifest.
    """
    actual = {
        "train_pairs": len(protocol.pairs("train")),
        "test_pairs": len(protocol.pairs("test")),
    }
    if manifest is not None:
        actual["train_bonafide"] = len(bona_fide_images(manifest, protocol, "train"))
        actual["test_bonafide"] = len(bona_fide_images(manifest, protocol, "test"))
    rows = []
    for key in sorted(expected):
        if key not in actual:
            raise ValidationError(f"cannot check {key!r} without a manifest" if "bonafide" in key
                                  else f"unknown count {key!r}")
        rows.append({"count": key, "expected": int(expected[key]), "actual": actual[key],
                     "delta": actual[key] - int(expected[key])})
    return {"rows": rows, "passed": all(r["delta"] == 0 for r in rows)}

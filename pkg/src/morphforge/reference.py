"""Published reference values, kept for context only.

None of these numbers are reproduced at desk scale: they come from a real
face database, a pretrained StyleGAN, ArcFace and a commercial face
recognition SDK. Reports embed them under a ``reference`` key with an
explicit not-reproduced note.
"""

NOT_REPRODUCED_NOTE = (
    "Published values for context only. NOT reproduced by this toolkit: they require the "
    "original face database, pretrained generator/recognition networks and a commercial SDK."
)

# attack -> system -> (MMPMR %, FMMPMR %) at FMR 0.1%
PUBLISHED_VULNERABILITY = {
    "LMA": {"COTS": (100.00, 98.84), "ArcFace": (99.68, 98.00)},
    "StyleGAN": {"COTS": (64.68, 41.49), "ArcFace": (72.80, 56.95)},
    "MIPGAN-II": {"COTS": (92.93, 81.59), "ArcFace": (94.21, 86.94)},
    "MorGAN": {"COTS": (0.00, 0.00), "ArcFace": (0.00, 0.00)},
    "ReGenMorph": {"COTS": (42.24, 34.47), "ArcFace": (33.98, 14.05)},
}

# (training attack, detector) -> (D-EER %, BPCER % @ APCER 5%, BPCER % @ APCER 10%),
# all evaluated on ReGenMorph test attacks
PUBLISHED_DETECTABILITY = {
    ("ReGenMorph", "Hybrid"): (2.48, 4.97, 4.97),
    ("ReGenMorph", "Ensemble"): (0.00, 0.00, 0.00),
    ("LMA", "Hybrid"): (0.08, 0.17, 0.27),
    ("LMA", "Ensemble"): (0.16, 0.17, 0.17),
    ("MIPGAN-II", "Hybrid"): (50.00, 100.00, 100.00),
    ("MIPGAN-II", "Ensemble"): (33.34, 70.33, 82.68),
}


def vulnerability_reference():
    return {
        "note": NOT_REPRODUCED_NOTE,
        "units": "percent",
        "columns": ["mmpmr", "fmmpmr"],
        "values": {attack: {system: list(v) for system, v in row.items()}
                   for attack, row in PUBLISHED_VULNERABILITY.items()},
    }


def detectability_reference():
    return {
        "note": NOT_REPRODUCED_NOTE,
        "units": "percent",
        "test_attack": "ReGenMorph",
        "columns": ["d_eer", "bpcer_at_apcer_0.05", "bpcer_at_apcer_0.10"],
        "values": [{"train_attack": t, "detector": d, "metrics": list(v)}
                   for (t, d), v in PUBLISHED_DETECTABILITY.items()],
    }

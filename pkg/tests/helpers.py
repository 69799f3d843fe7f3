"""Shared builders for pipeline-level tests."""

from dataclasses import replace

import numpy as np

from imucap.nets import CANONICAL_SPECS, Network
from imucap.pipeline import NetworkBundle, VARIANTS
from imucap.training import variant_specs


def tiny_bundle(variant="full", hidden=6, seed=0, b2_bidirectional=False):
    base = {k: replace(s, hidden=hidden) for k, s in CANONICAL_SPECS.items()}
    base["trans-b2"] = replace(base["trans-b2"], bidirectional=b2_bidirectional)
    specs = variant_specs(VARIANTS[variant], base)
    return NetworkBundle({k: Network.create(s, seed=seed + i) for i, (k, s) in enumerate(specs.items())})


def random_inputs(T, seed=0):
    """Plausible normalized inputs: small accelerations and valid rotations."""
    from imucap.calibration import normalize
    from imucap.rotmath import random_rotation
    rng = np.random.default_rng(seed)
    return normalize(rng.normal(0, 3, (T, 6, 3)), random_rotation(rng, (T, 6)))

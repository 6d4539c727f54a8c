"""Deterministic seed derivation for independent random streams."""

import numpy as np

ROLES = {"acquire": 0, "ehvi": 1, "candidates": 2, "gp_fit": 3, "init": 4}


def derive_seed(master_seed, index, role):
    """Seed for stream ``role`` at position ``index`` under ``master_seed``."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(index), ROLES[role]))
    return int(seq.generate_state(1, dtype=np.uint32)[0])

"""Exact simulation of unit-diffusion SDEs and unbiased Monte Carlo Greeks."""

import os

# the bundled TBB is too old for numba; the workqueue layer is always available
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

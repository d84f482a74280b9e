import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from placefx.simgen import DgpConfig, generate


@pytest.fixture(scope="session")
def small_panel():
    """8x8 lattice panel with distinct approach distortions, rho=0.3."""
    cfg = DgpConfig(
        grid_rows=8,
        grid_cols=8,
        rho_true=0.3,
        delta_true={"poverty": 0.8, "canopy": -0.5},
        treatment_share=0.3,
        noise_sd=1.0,
        approach_bias={"mllm": (0.9, 0.05), "segmentation": (0.55, -0.1)},
        seed=101,
    )
    panel, weights, truth = generate(cfg)
    return panel, weights, truth


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

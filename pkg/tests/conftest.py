import json
from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def load_fixture_json(name: str):
    return json.loads((FIXTURES / name).read_text(encoding="utf-8"))


def random_bitmap(rng: np.random.Generator, max_side: int = 64) -> np.ndarray:
    h = int(rng.integers(1, max_side + 1))
    w = int(rng.integers(1, max_side + 1))
    density = rng.uniform(0.0, 1.0)
    return rng.random((h, w)) < density


def bitmap_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Independent oracle: IoU from decoded pixel counts."""
    inter = np.logical_and(a, b).sum()
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(inter) / float(union)

import numpy as np
import pytest
from smtalign.config import Config
from smtalign.domain import PLACEMENT_SLOTS, PasteState, PlacementRecord, PlacementSetting, PostOffsets
from smtalign.synthetic_line import DIRECTORY_PRESETS

# Paste state at the measured means; centroid (94, 130), slope 0 degrees.
MEAN_PASTE = (95.25, 2.21, 404.0, 130.0, -216.0, 130.0)


class SlotStub:
    """Predictor returning one feature slot, optionally scaled and shifted."""

    def __init__(self, slot: int, slope: float = 1.0, offset: float = 0.0):
        self.slot = slot
        self.slope = slope
        self.offset = offset

    def predict(self, x) -> float:
        return self.slope * float(x[self.slot]) + self.offset

    def predict_many(self, features):
        return self.slope * np.asarray(features)[:, self.slot] + self.offset


class ConstantStub:
    def __init__(self, value: float):
        self.value = value

    def predict(self, x) -> float:
        return self.value

    def predict_many(self, features):
        return np.full(len(features), self.value)


@pytest.fixture(autouse=True)
def reset_config():
    """Every test starts without a Config instance."""
    Config.reset()
    yield
    Config.reset()


@pytest.fixture
def make_record():
    """Factory for placement records on a preset directory."""
    def factory(directory="R1005", paste=MEAN_PASTE, placement=(123.16, 61.38, -0.12), targets=None):
        return PlacementRecord(
            DIRECTORY_PRESETS[directory],
            PasteState(*paste),
            PlacementSetting(*placement),
            PostOffsets(*targets) if targets is not None else None,
        )
    return factory


@pytest.fixture
def identity_predictors():
    """F_x = chi_1, F_y = chi_2, F_theta = chi_3."""
    x_slot = PLACEMENT_SLOTS.start
    return {
        "post_x": SlotStub(x_slot),
        "post_y": SlotStub(x_slot + 1),
        "post_theta": SlotStub(x_slot + 2),
    }

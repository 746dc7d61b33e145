import math

import pytest

from ..schedules import lr_schedule
from ...errors import ConfigError

# License: BSD 3 clause


def test_inv_sqrt():
    total, warmup, cooldown = 1000, 50, 100
    assert lr_schedule(0, total, warmup, cooldown) == 0
    assert lr_schedule(25, total, warmup, cooldown) == pytest.approx(0.5)
    assert lr_schedule(warmup, total, warmup, cooldown) == 1
    assert lr_schedule(4*warmup, total, warmup, cooldown) == pytest.approx(0.5)
    assert lr_schedule(total, total, warmup, cooldown) == 0

    # continuous at the start of the cooldown, then linear
    start = total - cooldown
    peak = math.sqrt(warmup/start)
    assert lr_schedule(start, total, warmup, cooldown) == pytest.approx(peak)
    assert lr_schedule(start + cooldown//2, total, warmup, cooldown) == pytest.approx(peak/2)
    assert lr_schedule(start - 1, total, warmup, cooldown) == pytest.approx(math.sqrt(warmup/(start - 1)))

    values = [lr_schedule(s, total, warmup, cooldown) for s in range(warmup, total + 1)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_cosine():
    total, warmup = 100, 10
    assert lr_schedule(5, total, warmup, kind='cosine') == pytest.approx(0.5)
    assert lr_schedule(warmup, total, warmup, kind='cosine') == 1
    assert lr_schedule(55, total, warmup, kind='cosine') == pytest.approx(0.5)
    assert lr_schedule(total, total, warmup, kind='cosine') == pytest.approx(0, abs=1e-15)


def test_no_warmup():
    assert lr_schedule(0, 10) == 1
    assert lr_schedule(4, 10) == pytest.approx(0.5)
    assert lr_schedule(0, 10, kind='cosine') == 1


def test_invalid_schedules():
    with pytest.raises(ConfigError):
        lr_schedule(0, 100, warmup_steps=60, cooldown_steps=50)
    with pytest.raises(ConfigError):
        lr_schedule(0, 100, kind='linear')
    with pytest.raises(ValueError):
        lr_schedule(-1, 100)

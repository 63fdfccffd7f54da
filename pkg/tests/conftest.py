import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def line_image(H=256, W=256, period=16, first=8, bg=0.8, line=0.2, tilt_deg=0.0, width=1.0):
    """Background with dark vertical (or tilted) lines; each pixel holds its exact area coverage."""
    slope = math.tan(math.radians(tilt_deg))
    x = np.arange(W)[None, :, None]
    img = np.full((H, W), bg)
    centers = []
    for h in range(H):
        c = np.arange(first, W, period) + h * slope
        centers.append(c)
        lo = np.maximum(x - 0.5, (c - width / 2)[None, None, :])
        hi = np.minimum(x + 0.5, (c + width / 2)[None, None, :])
        cover = np.clip(hi - lo, 0, None).sum(axis=2)[0]
        img[h] = bg + (line - bg) * np.minimum(cover, 1.0)
    return img, centers


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

"""Fixed inputs for the frozen golden-output files in ``tests/golden``."""
from lgmtrack.data import Track
from lgmtrack.graph import Detection

WIDTH, HEIGHT = 1242.0, 375.0


def golden_tracks():
    a = [Detection(f, 0.20 + 0.01 * f, 0.55, 0.08, 0.20, 0.9, 3) for f in range(4)]
    b = [Detection(f, 0.70 - 0.02 * f, 0.60, 0.10, 0.25, 0.75, 1) for f in (1, 2, 4)]
    c = [Detection(5, 0.333333, 0.444444, 0.0555, 0.1234, 1.0, 12)]
    return [Track(3, a), Track(1, b), Track(12, c)]

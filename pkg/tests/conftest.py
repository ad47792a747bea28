import numpy as np
import pytest

from afmkit.geom import LatticeDims, LineSegmentMap

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture
def record():
    """Log one acceptance line; the terminal summary prints them all."""
    def _record(name, passed, detail=""):
        ACCEPTANCE_RESULTS.append((name, bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


def random_map(rng, max_segments=20, min_side=4, max_side=64) -> LineSegmentMap:
    W, H = (int(v) for v in rng.integers(min_side, max_side + 1, 2))
    n = int(rng.integers(1, max_segments + 1))
    rows = []
    while len(rows) < n:
        c = rng.uniform(0, 1, 4) * [W - 1, H - 1, W - 1, H - 1]
        if np.hypot(c[2] - c[0], c[3] - c[1]) > 1e-3:
            rows.append(c)
    return LineSegmentMap.from_array(LatticeDims(W, H), rows)

import numpy as np
import pytest

from urbansmpc.path_geometry import (
    BezierSegment,
    LineSegment,
    ReferencePath,
    make_left_turn_bezier,
)


@pytest.fixture(scope="session")
def turn_path():
    """Straight east, left-turn Bezier, straight north; entry of the turn
    marks the intersection conflict zone."""
    approach = LineSegment(start=(-110.0, -1.5), heading=0.0, length=98.0)
    turn = make_left_turn_bezier(
        entry_point=(-12.0, -1.5),
        entry_heading=0.0,
        exit_point=(1.5, 12.0),
        exit_heading=np.pi / 2,
    )
    exit_len = 400.0
    exit_seg = LineSegment(start=(1.5, 12.0), heading=np.pi / 2, length=exit_len)
    entry_s = approach.length
    return ReferencePath(
        segments=[approach, turn, exit_seg],
        intersection_entry_s=entry_s,
        intersection_exit_s=entry_s + turn.length,
    )

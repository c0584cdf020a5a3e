import numpy as np
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from delaygrowth.segment import Segment


def segment_values(min_n=2, max_n=64, bound=1e6):
    """Finite, not identically zero grid samples."""
    return st.integers(min_n, max_n).flatmap(
        lambda n: arrays(np.float64, n + 1,
                         elements=st.floats(-bound, bound, allow_nan=False, allow_subnormal=False))
    ).filter(lambda v: np.max(np.abs(v)) > 1e-3)


def segments(**kw):
    return segment_values(**kw).map(Segment)


ACCEPTANCE = {}


def record(number, name, ok, detail=""):
    """Log an acceptance verdict; printed now and again in the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {name}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])

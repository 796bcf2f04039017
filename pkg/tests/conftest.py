import pytest

from clwip.packet import FiveTuple, Packet

FLOW = FiveTuple("203.0.113.10", "10.0.0.1", 5000, 10000, "UDP")


def make_packet(pid=1, size=1500, flow=FLOW, ue=0, downlink=True, created=0, **kw) -> Packet:
    return Packet(pid, flow, 0, size, size - 28, ue, downlink, created, **kw)


@pytest.fixture
def packet_factory():
    counter = iter(range(1, 10**9))

    def make(**kw):
        return make_packet(pid=next(counter), **kw)

    return make


# Acceptance verdicts, printed as one line per criterion at the end of the session.
VERDICTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        ok, detail = VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

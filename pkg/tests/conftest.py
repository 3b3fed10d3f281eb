from collections import defaultdict

import pytest

CRITERIA = {
    1: "rate and range table",
    2: "closed-form success vs simulation (duty sweep)",
    3: "interference Laplace transform vs simulation",
    4: "optimal duty cycle vs grid search",
    5: "headline throughput numbers",
    6: "iterative balancing convergence properties",
    7: "simulator statistical hygiene",
}

_results: dict[int, list[tuple[str, bool, str]]] = defaultdict(list)


class Checks:
    """Collects sub-check outcomes for one acceptance criterion."""

    def __init__(self, criterion: int):
        self.criterion = criterion
        self.failed: list[str] = []

    def __call__(self, label: str, ok: bool, detail: str = "") -> bool:
        ok = bool(ok)
        _results[self.criterion].append((label, ok, detail))
        if not ok:
            self.failed.append(f"{label}: {detail}" if detail else label)
        return ok

    def verdict(self) -> None:
        assert not self.failed, "; ".join(self.failed)


@pytest.fixture
def checks(request):
    marker = request.node.get_closest_marker("criterion")
    return Checks(marker.args[0])


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, title in CRITERIA.items():
        rows = _results.get(n)
        if not rows:
            tr.write_line(f"criterion {n}: SKIP  {title} (not run)")
            continue
        bad = [r for r in rows if not r[1]]
        status = "PASS" if not bad else "FAIL"
        tr.write_line(f"criterion {n}: {status}  {title} ({len(rows) - len(bad)}/{len(rows)} checks)")
        for label, _, detail in bad:
            tr.write_line(f"    failed: {label} {detail}".rstrip())

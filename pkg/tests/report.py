"""Collects one verdict line per acceptance criterion for the terminal summary."""

LINES = []


def verdict(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} | {detail}"
    LINES.append(line)
    print(line)
    assert ok, line

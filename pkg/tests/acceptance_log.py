"""Collects one PASS/FAIL line per acceptance criterion."""

LINES = []


def record(number, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} | {detail}"
    LINES.append(line)
    print(line, flush=True)
    return passed

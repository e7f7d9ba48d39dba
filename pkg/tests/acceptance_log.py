"""Collects one verdict per acceptance criterion for the terminal summary."""

from collections import OrderedDict

RESULTS = OrderedDict()


def record(criterion, part, passed, detail):
    RESULTS.setdefault(criterion, []).append((part, bool(passed), detail))
    line = f"criterion {criterion}{part}: {'PASS' if passed else 'FAIL'} - {detail}"
    print(line)
    return passed


def summary_lines():
    for crit, parts in RESULTS.items():
        ok = all(p for _, p, _ in parts)
        detail = "; ".join(f"{tag}{': ' if tag else ''}{'pass' if p else 'FAIL'} ({d})" for tag, p, d in parts)
        yield f"criterion {crit}: {'PASS' if ok else 'FAIL'} - {detail}"

"""Collects one verdict line per acceptance criterion for the terminal summary."""

LINES: dict[int, str] = {}


def record(number: int, status: str, title: str, detail: str = "") -> None:
    LINES[number] = f"criterion {number}: {status:<4} {title}" + (f" ({detail})" if detail else "")

"""Shared record of acceptance outcomes, printed in the pytest summary."""

RESULTS: dict[int, tuple[bool, str]] = {}


def report(criterion: int, ok: bool, detail: str) -> None:
    RESULTS[criterion] = (bool(ok), detail)

"""Small descriptive statistics."""


def median(values):
    """Middle value of a non-empty sequence."""
    ordered = list(values)
    mid = len(ordered) // 2
    if len(ordered) % 2:
        return ordered[mid]
    return (ordered[mid - 1] + ordered[mid]) / 2


def mean(values):
    return sum(values) / len(values)

import math


def weighted_sum(
    values,
    weights,
    default=0,
):
    total = default
    for v, w in zip(values, weights):
        total += v + w
    return total


def norm(values):
    return math.sqrt(weighted_sum(values, values))

"""Input validation helpers shared across the package."""
import numpy as np


class ValidationError(ValueError):
    """Raised for invalid configurations, specs or inputs."""


def as_generator(rng=None) -> np.random.Generator:
    """Accept a Generator, SeedSequence, int seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def substream(seed, *tags) -> np.random.Generator:
    """Generator derived from ``seed`` and a path of integer/string tags.

    Streams for different tags are statistically independent; the same
    ``(seed, tags)`` always yields the same stream.
    """
    words = [int(seed)]
    for t in tags:
        if isinstance(t, str):
            words.extend(t.encode())
        else:
            words.append(int(t))
    return np.random.default_rng(np.random.SeedSequence(words))


def check_positive(name, value, strict=True):
    value = float(value)
    ok = value > 0 if strict else value >= 0
    if not (np.isfinite(value) and ok):
        raise ValidationError(f"{name} must be {'>' if strict else '>='} 0, got {value}")
    return value


def check_int(name, value, minimum=1):
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise ValidationError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_nonnegative_array(name, values):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be a sequence of reals")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValidationError(f"{name} must be finite and >= 0")
    return arr

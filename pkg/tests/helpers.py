"""Shared test helpers."""


def random_params(rng):
    """A random valid device drawn around the preset ranges."""
    from tclflex.thermal import COOLING, HEATING, TclParams
    kind = int(rng.integers(0, 2))
    r = float(rng.uniform(1.0, 120.0))
    c = float(rng.uniform(0.2, 3.0))
    p = float(rng.uniform(0.2, 6.0))
    return TclParams(r, c, p if kind == COOLING else -p, float(rng.uniform(1.0, 4.0)),
                     float(rng.uniform(2.0, 50.0)), float(rng.uniform(0.3, 3.0)),
                     COOLING if kind == COOLING else HEATING, int(rng.integers(0, 3)))

"""Exception types shared across martonlab."""


class InputError(ValueError):
    """Malformed or out-of-range input (bad simplex, shape mismatch, ...)."""


class SizeError(ValueError):
    """Alphabet or grid size beyond what a routine supports."""


class InfeasibleError(ValueError):
    """A map/fiber structure cannot carry the requested input law."""


class DegeneracyError(ValueError):
    """A zero (or near-zero) probability where a strictly positive one is required."""

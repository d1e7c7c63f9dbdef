class OccFusionError(Exception):
    pass


class InvariantViolation(OccFusionError, ValueError):
    """A value object was constructed with inconsistent fields."""

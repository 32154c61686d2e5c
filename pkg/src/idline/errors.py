"""Exception hierarchy.

Everything geometric derives from :class:`GeometryError` (a ``ValueError``)
so callers that only care about "this feature is unusable" can catch one
type.
"""


class GeometryError(ValueError):
    pass


class DegenerateLineError(GeometryError):
    """Line direction (or normal, where required) vanishes."""


class NoIntersectionError(GeometryError):
    """A back-projected ray does not meet the line."""


class BehindCameraError(GeometryError):
    """A recovered depth is not positive."""


class DegenerateProjectionError(GeometryError):
    """Projected image line has (l1, l2) ~ 0."""


class RotationOnlyDegenerateError(GeometryError):
    """Observation plane passes through the anchor camera center.

    Raised when the relative motion has no baseline component normal to the
    plane, so every inverse depth satisfies the plane constraint.
    """


class InsufficientParallaxError(GeometryError):
    """All views of a track are rotation-only degenerate."""


class MissingStateError(KeyError):
    """A factor references a frame or feature that is not in the window."""


class ConfigError(ValueError):
    """Bad configuration file or value; carries an optional line number."""

    def __init__(self, message: str, *, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)

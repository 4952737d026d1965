"""Exception types shared across the package.

All of these derive from ValueError so callers that do not care about the
distinction can catch one thing; the CLI maps them onto exit codes.
"""


class ConfigError(ValueError):
    """Invalid configuration: bad ranges, unknown keys, empty pools."""


class ContractError(ValueError):
    """An operation was invoked outside its contract (e.g. bilinear
    sampling of categorical labels, kernel wider than the raster)."""


class DataError(ValueError):
    """Malformed payload data: out-of-range class indices, non-positive
    ground-truth depth, zero-length normals where a direction is required."""


class ManifestError(ValueError):
    """A manifest or prediction directory could not be parsed or keyed.

    Carries enough context (path, line) to point at the offending input.
    """

    def __init__(self, message, path=None, line=None):
        detail = message
        if path is not None:
            detail = f"{path}: {detail}"
        if line is not None:
            detail = f"{detail} (line {line})"
        super().__init__(detail)
        self.path = path
        self.line = line

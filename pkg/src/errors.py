class MusicLabError(ValueError):
    """Base class for market, solver and trace errors."""


class DimensionMismatchError(MusicLabError):
    """Vectors that must describe the same songs have different lengths."""


class DegenerateMarketError(MusicLabError):
    """Every song has zero attraction, so sampling probabilities are undefined."""


class UnsupportedTransformError(MusicLabError):
    """The operation is only defined for the identity influence transform."""


class ParameterError(MusicLabError):
    """An argument is outside its admissible range."""


class StateCorruptionError(MusicLabError):
    """A market state violates D <= S."""


class ConvergenceError(MusicLabError):
    """A parametric solver exceeded its iteration cap."""


class UndefinedShareError(MusicLabError):
    """A world has no downloads, so its market shares are undefined."""

    def __init__(self, world_id: int):
        super().__init__(f"World {world_id} has zero downloads; market shares are undefined")
        self.world_id = world_id


class TraceDataError(MusicLabError):
    """Trace files are missing, partial or inconsistent."""


class OutputExistsError(MusicLabError):
    """An output file already exists and overwriting was not requested."""

    def __init__(self, path):
        super().__init__(f"{path} already exists; pass --force to overwrite")
        self.path = path

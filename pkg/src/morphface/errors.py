"""Exception types shared across the package."""


class MorphfaceError(Exception):
    """Base class for all morphface errors."""


class TopologyError(MorphfaceError):
    """Sample meshes disagree on vertex count, triangulation or UV layout."""


class RankError(MorphfaceError):
    """Requested number of PCA components exceeds the data rank."""


class DimensionError(MorphfaceError):
    """Array arguments have incompatible shapes or lengths."""


class ModelFormatError(MorphfaceError):
    """Model container is corrupt, truncated or has the wrong magic/version."""


class ParseError(MorphfaceError):
    """A structured-text file failed to parse.

    ``line`` is the 1-based line number when known, else None.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyMaskError(MorphfaceError):
    """A loss was requested over an empty pixel mask."""


class InitError(MorphfaceError):
    """Fitting cannot start, e.g. the initial render covers no pixels."""


class DivergenceError(MorphfaceError):
    """The optimizer produced a non-finite loss.

    ``last_params`` holds the last iterate with a finite loss.
    """

    def __init__(self, message, last_params=None):
        super().__init__(message)
        self.last_params = last_params


class VisibilityError(MorphfaceError):
    """Texture recovery has no visible texels to work with."""

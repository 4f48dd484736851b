"""Exception types shared across the package."""


class InsufficientDataError(RuntimeError):
    """Not enough buffered samples to satisfy a windowing/evaluation request."""


class ModelFormatError(ValueError):
    """Model file is corrupt, truncated, or of an unsupported version.

    ``offset`` is the byte offset of the first parse failure when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset

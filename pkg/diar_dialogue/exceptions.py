class ParseError(ValueError):
    """
    Raised when an interchange file or stream cannot be parsed.

    Parameters
    ----------
    message : str
        What went wrong.

    line : int, optional
        1-based line number (or entry index for JSON arrays) of the offending
        record.

    source : str, optional
        Name of the file or stream the record came from.
    """

    def __init__(
            self,
            message: str,
            line: int | None = None,
            source: str | None = None
    ) -> None:
        self.message = message
        self.line = line
        self.source = source
        super().__init__(self.__str__())

    def __str__(self) -> str:
        locator = self.source or "<stream>"
        if self.line is not None:
            locator = f"{locator}:{self.line}"
        return f"{locator}: {self.message}"


class BackendError(RuntimeError):
    """Raised when a recognizer backend fails to spawn, answer or parse."""

class SpikegradException(Exception):
    """Base exception. `exit_code` is what the CLI returns for it."""

    exit_code: int = 1


class ConfigurationException(SpikegradException):
    exit_code = 2


class RasterFormatException(SpikegradException):
    exit_code = 3

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class CheckpointFormatException(RasterFormatException):
    pass


class ResourceCapException(SpikegradException):
    exit_code = 4

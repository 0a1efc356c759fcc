class CtxadError(RuntimeError):
    """Base error. `exit_code` is what the CLI exits with when this escapes a command."""

    exit_code = 1

    def __init__(self, message: str, *, hint: str | None = None) -> None:
        super().__init__(message)
        self.message = message
        self.hint = hint


class ValidationError(CtxadError):
    """Malformed manifest, CSV, config, or a request naming unknown columns."""

    exit_code = 2


class StorageError(CtxadError):
    """File could not be read or written, or its contents are not what we wrote."""

    exit_code = 3


class EncodedFileError(StorageError):
    pass


class CheckpointError(StorageError):
    pass


class NumericalDivergenceError(CtxadError):
    """A loss, gradient or score went NaN/Inf."""

    exit_code = 4


class SelectionError(CtxadError):
    """Every context candidate failed."""

    exit_code = 4


class DegenerateLabelsError(CtxadError):
    """An evaluation needs both classes but only one is present."""

    exit_code = 5

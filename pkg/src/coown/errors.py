"""Exception hierarchy shared by every layer of the package."""


class CoownError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(CoownError, ValueError):
    """Invalid or mutually inconsistent parameters."""


class SizeMismatchError(ParameterError):
    """A key or block does not have the width the primitive expects."""


class FormatError(CoownError, ValueError):
    """Malformed wire data: bad magic, truncation, duplicate indices."""


class InsufficientChunksError(CoownError):
    """Fewer than t dispersal chunks were supplied."""


class InsufficientDelegationsError(CoownError):
    """Fewer than t delegations were supplied to combine."""


class PollutedTokenError(CoownError):
    """Reconstructed data does not match the published unit digest."""


class AccessDeniedError(CoownError, PermissionError):
    """The caller lacks the rights needed for an operation."""


class InsufficientTokensError(AccessDeniedError):
    """Endorsed tokens are available from fewer than t owners."""


class InconsistentMetadataError(CoownError):
    """No t owners agree byte-for-byte on a version manifest."""


class DuplicateFileError(CoownError):
    """A file with the requested name already exists."""


class MissingTokensError(CoownError):
    """An owner does not hold the tokens an operation needs."""


class UnsupportedOperationError(CoownError):
    """Operation that the shared-ownership design cannot support safely."""


class AlreadyExistsError(CoownError, FileExistsError):
    """A storage path was written before; paths are write-once."""


class ObjectNotFoundError(CoownError, FileNotFoundError):
    """A storage path does not exist."""

class BfkitError(ValueError):
    """Base class for every error raised by bfkit."""


class FormatError(BfkitError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class RangeError(BfkitError):
    pass


class ParameterError(BfkitError):
    pass


class DegenerateInputError(BfkitError):
    pass


class DegenerateClusterError(BfkitError):
    def __init__(self, cluster, iteration=None):
        self.cluster = cluster
        self.iteration = iteration
        msg = f"cluster {cluster} is empty"
        if iteration is not None:
            msg += f" at iteration {iteration}"
        super().__init__(msg)


class IllConditionedWarning(UserWarning):
    pass

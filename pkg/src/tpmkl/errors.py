"""Exception hierarchy shared by all tpmkl modules."""


class TPMKLError(Exception):
    """Base class for every error raised by this package."""


class FormatError(TPMKLError):
    """A binary file or manifest is malformed."""

    def __init__(self, message, path=None, offset=None):
        self.path = path
        self.offset = offset
        where = ""
        if path is not None:
            where = f"{path}"
            if offset is not None:
                where += f" @ byte {offset}"
            where += ": "
        super().__init__(where + message)


class ParameterError(TPMKLError, ValueError):
    """An argument violates a documented precondition."""


class GranularityError(ParameterError):
    """A pyramid node would contain no frames."""


class ShapeError(TPMKLError, ValueError):
    """Array shapes or node sets do not line up."""


class DegenerateKernelError(TPMKLError):
    """A Gram matrix has zero trace and cannot be normalized."""


class KernelError(TPMKLError):
    """A kernel matrix is not symmetric positive semi-definite."""


class DegenerateProblemError(TPMKLError):
    """A classification problem lacks one of its classes."""


class SolverStallError(TPMKLError):
    """The simplex solver made no progress within its pivot budget."""

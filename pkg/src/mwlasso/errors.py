"""Exception hierarchy shared across the package."""


class MwlassoError(Exception):
    """Base class for all package errors."""


class InputError(MwlassoError, ValueError):
    """Invalid user input (bad schema, unparsable values, bad flags)."""


class SchemaError(InputError):
    pass


class ParseError(InputError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class EmptyDatasetError(InputError):
    pass


class InvalidConstantError(InputError):
    pass


class InsufficientClustersError(InputError):
    pass


class DegenerateTreatmentError(MwlassoError):
    """The treatment has no variation left after projecting out controls."""

"""Exception types shared across the package."""


class DataFormatError(Exception):
    """A file or record does not match its documented format."""


class NumericError(Exception):
    """A computation produced non-finite or otherwise unusable values."""

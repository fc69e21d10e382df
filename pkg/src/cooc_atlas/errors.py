"""Exception types shared across the package.

The CLI maps these to exit codes (data errors to 2, numerical aborts to 3);
the server maps unknown-entity errors to 404 and other data errors to 400.
"""


class DataError(ValueError):
    """Invalid input data: malformed files, inconsistent tables, bad queries."""


class UnknownEntityError(DataError):
    """A referenced item, domain, or session does not exist."""


class NumericalError(RuntimeError):
    """A numerical computation failed or diverged beyond recovery."""

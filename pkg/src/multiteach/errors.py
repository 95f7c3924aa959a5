"""Exception types raised by multiteach."""


class InputError(ValueError):
    """Arguments violate an operation's preconditions."""


class ImageParseError(ValueError):
    """Malformed PGM/PPM data; ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class CommSolveError(RuntimeError):
    """The communication matrix least-squares problem has no unique solution."""


class UsageError(ValueError):
    """Invalid CLI flags or config file keys."""

class MegcnError(Exception):
    """Base class for every error raised by this package."""


class AllTokensFiltered(MegcnError, ValueError):
    pass


class ClassTooSmall(MegcnError, ValueError):
    pass


class DegenerateCorpus(MegcnError, ValueError):
    pass


class ShapeMismatch(MegcnError, ValueError):
    pass


class MissingRow(MegcnError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "missing row"


class EmptyMask(MegcnError, ValueError):
    pass


class Divergence(MegcnError, RuntimeError):
    pass


class MissingCheckpoint(MegcnError, FileNotFoundError):
    pass


class StageError(MegcnError, RuntimeError):
    """Wraps a failure inside a pipeline stage and names that stage."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause

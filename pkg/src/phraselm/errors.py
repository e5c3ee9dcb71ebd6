"""Exception hierarchy shared by every phraselm module."""


class PhraseLMError(Exception):
    """Base class for all errors raised by phraselm."""


class EmptyLine(PhraseLMError, ValueError):
    """A line contained no tokens."""


class EmptyCorpus(PhraseLMError):
    """No sentence survived ingestion and filtering."""


class FormatError(PhraseLMError):
    """A file did not follow its wire format."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class CapacityError(PhraseLMError):
    """The configured key budget was exceeded while counting."""

    def __init__(self, sentence_index, budget):
        self.sentence_index = sentence_index
        self.budget = budget
        super().__init__(
            f"key budget of {budget} exceeded at sentence {sentence_index}")


class UnseenContext(PhraseLMError):
    """The conditioning context was never observed, so the MLE is undefined."""


class ZeroProbability(PhraseLMError):
    """A sentence received probability zero."""

    def __init__(self, message, position=None):
        self.position = position
        super().__init__(message)


class UnscorableCorpus(ZeroProbability):
    """One or more sentences of a corpus have probability zero."""

    def __init__(self, indices):
        self.indices = list(indices)
        shown = ", ".join(str(i) for i in self.indices[:10])
        more = "" if len(self.indices) <= 10 else ", ..."
        super().__init__(
            f"{len(self.indices)} unscorable sentence(s): {shown}{more}")


class TooLong(PhraseLMError):
    """A sentence exceeds the bound of an exhaustive or exact search."""


class EmptyInput(PhraseLMError, ValueError):
    """An evaluation received no data."""

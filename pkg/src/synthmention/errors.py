"""Exception hierarchy shared across the toolkit.

Exit-code mapping in the CLI: UsageError -> 1, DataError -> 2,
anything else -> 3.
"""


class SynthMentionError(Exception):
    """Base class for all toolkit errors."""


class DataError(SynthMentionError):
    """Malformed or inconsistent input data (files, records, spans)."""


class ParseError(DataError):
    """A file could not be parsed; carries the offending location."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc = f" [{loc}]"
        super().__init__(f"{message}{loc}")
        self.path = path
        self.line = line

"""Exception hierarchy shared by every layer of the engine."""


class TempographError(Exception):
    """Base class for all engine errors."""

    kind = "Error"

    def reason(self) -> str:
        return f"{self.kind}: {self}"


class WriteConflict(TempographError):
    kind = "WriteConflict"


class EndpointMissing(TempographError):
    kind = "EndpointMissing"


class ObjectMissing(TempographError):
    kind = "ObjectMissing"


class TransactionClosed(TempographError):
    kind = "TransactionClosed"


class MalformedKey(TempographError):
    kind = "MalformedKey"


class OutOfOrder(TempographError):
    kind = "OutOfOrder"


class CorruptChain(TempographError):
    kind = "CorruptChain"


class CorruptRecord(TempographError):
    kind = "CorruptRecord"


class EvalError(TempographError):
    kind = "EvalError"


class InvalidRange(EvalError, ValueError):
    kind = "InvalidRange"


class ParseError(TempographError):
    """Syntax error with a 1-based source position."""

    kind = "ParseError"

    def __init__(self, message, line=1, column=1, expected=(), text=None):
        self.message = message
        self.line = line
        self.column = column
        self.expected = tuple(sorted(set(expected)))
        self.text = text
        super().__init__(f"{message} at line {line}, column {column}")

    def diagnostic(self) -> str:
        """Multi-line message with the offending source line and a caret."""
        out = [f"ParseError: {self}"]
        if self.text is not None:
            lines = self.text.splitlines() or [""]
            if 1 <= self.line <= len(lines):
                out.append("  " + lines[self.line - 1])
                out.append("  " + " " * (self.column - 1) + "^")
        if self.expected:
            out.append("expected one of: " + ", ".join(self.expected))
        return "\n".join(out)


class ConstraintError(TempographError):
    kind = "ConstraintError"


class WorkloadError(TempographError):
    """Malformed workload file; carries the offending line number."""

    kind = "WorkloadError"

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")

"""Exception hierarchy shared across the pipeline.

Exit-code mapping used by the CLI lives in cli.py; these classes only
classify failures.
"""


class Script2BoardError(Exception):
    """Base class for everything raised on purpose by this package."""


# --- parsing ---------------------------------------------------------------

class ParseError(Script2BoardError):
    pass


class UnparsableLine(ParseError):
    def __init__(self, line_no, line):
        self.line_no = line_no
        self.line = line
        super().__init__(f"line {line_no}: cannot classify {line!r}")


class DialogueBeforeScene(ParseError):
    def __init__(self, line_no, cue):
        self.line_no = line_no
        super().__init__(f"line {line_no}: cue {cue!r} appears before any scene heading")


class EmptyAfterNormalization(ParseError):
    pass


# --- director --------------------------------------------------------------

class SchemaViolation(Script2BoardError):
    pass


class UnattributableDialogue(Script2BoardError):
    pass


class ContradictionDetected(Script2BoardError):
    pass


class DuplicateAlias(Script2BoardError):
    pass


class UnknownSegment(Script2BoardError):
    pass


# --- backends --------------------------------------------------------------

class BackendError(Script2BoardError):
    pass


class Timeout(BackendError):
    pass


class AuthMissing(BackendError):
    pass


class NonRetryableStatus(BackendError):
    def __init__(self, status, body=""):
        self.status = status
        super().__init__(f"backend returned status {status}: {body[:200]}")


class MalformedResponse(BackendError):
    pass


class DecodeError(BackendError):
    pass


class DimensionRejected(BackendError):
    pass


class DimensionMismatch(BackendError):
    pass


class WrongCount(BackendError):
    def __init__(self, got, expected=8):
        super().__init__(f"backend returned {got} images, expected {expected}")


# --- cinematographer / storyboard ------------------------------------------

class UnrefinedRecord(Script2BoardError):
    pass


class MissingViewSet(Script2BoardError):
    pass


class InfeasibleLayout(Script2BoardError):
    pass


class AssetMissing(Script2BoardError):
    pass


# --- quality ---------------------------------------------------------------

class ImageTooSmall(Script2BoardError):
    pass


class DegenerateSamples(Script2BoardError):
    pass


class CorpusTooSmall(Script2BoardError):
    pass


# --- workspace -------------------------------------------------------------

class StaleStage(Script2BoardError):
    """A pipeline stage was invoked with missing or out-of-date predecessors."""


class WorkspaceLocked(Script2BoardError):
    pass

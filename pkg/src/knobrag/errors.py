"""Exception hierarchy shared across the package."""


class KnobragError(Exception):
    """Base class for domain errors (the CLI maps these to exit code 1)."""


# knob registry / values
class MalformedRegistry(KnobragError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        where = ""
        if line is not None:
            where = f"line {line}"
            if field:
                where += f", field {field!r}"
            where += ": "
        super().__init__(where + message)
        self.line = line
        self.field = field


class DuplicateKnob(KnobragError):
    pass


class UnknownKnob(KnobragError):
    pass


class ValueOutOfDomain(KnobragError):
    pass


class FormatFailure(KnobragError):
    """The model (or any text source) did not produce the required format."""


# corpus
class MalformedCorpus(KnobragError):
    pass


class UnknownKnobLabel(KnobragError):
    pass


class EmptyInput(KnobragError, ValueError):
    pass


# embeddings / training
class BackendUnavailable(KnobragError):
    pass


class BackendTimeout(BackendUnavailable):
    pass


class DimensionMismatch(KnobragError, ValueError):
    pass


class NonpositiveTau(KnobragError, ValueError):
    pass


class NoPositiveAvailable(KnobragError):
    pass


class EmptyTriples(KnobragError, ValueError):
    pass


class CorruptCheckpoint(KnobragError):
    pass


# vector store
class DuplicateId(KnobragError):
    pass


class CorruptIndex(KnobragError):
    pass


class IoFailure(KnobragError):
    pass


# telemetry
class SeriesTooShort(KnobragError, ValueError):
    pass


class ZeroMad(KnobragError, ArithmeticError):
    pass


class DegenerateSample(KnobragError, ValueError):
    pass


class MissingCatalogEntry(KnobragError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


# reasoner / augment
class MissingTranscript(KnobragError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class NoSnippets(KnobragError):
    pass


# evaluation
class EmptyGold(KnobragError, ValueError):
    pass


class UnmatchedVerdict(KnobragError):
    pass

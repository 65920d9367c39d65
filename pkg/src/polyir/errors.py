"""Exception hierarchy shared by all polyir modules."""


class PolyIRError(Exception):
    """Base class for every error raised deliberately by polyir."""


class CorpusFormatError(PolyIRError, ValueError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


class DuplicateDocumentError(PolyIRError, ValueError):
    def __init__(self, doc_id: str):
        super().__init__(f"duplicate doc_id {doc_id!r}")
        self.doc_id = doc_id


class UnknownDocumentError(PolyIRError, KeyError):
    def __init__(self, doc_id: str):
        super().__init__(f"unknown doc_id {doc_id!r}")
        self.doc_id = doc_id

    def __str__(self) -> str:
        return self.args[0]


class EmptyInputError(PolyIRError, ValueError):
    """An operation received an empty token sequence, batch or file."""


class DimensionMismatchError(PolyIRError, ValueError):
    pass


class FileFormatError(PolyIRError, ValueError):
    """A binary artifact could not be decoded."""


class BadMagicError(FileFormatError):
    pass


class UnsupportedVersionError(FileFormatError):
    pass


class TruncatedFileError(FileFormatError):
    pass


class NoTemplateError(PolyIRError, ValueError):
    """A question contains no lexicon entity, so no template can be built."""


class NoCandidateError(PolyIRError, ValueError):
    """No template in the bank can be filled from the passage."""


class UnsatisfiableSlotError(PolyIRError, ValueError):
    def __init__(self, slot_type: str):
        super().__init__(f"passage has no unused entity for slot [{slot_type}]")
        self.slot_type = slot_type


class MissingJudgmentsError(PolyIRError, KeyError):
    def __init__(self, query_id: str):
        super().__init__(f"no relevance judgments for query {query_id!r}")
        self.query_id = query_id

    def __str__(self) -> str:
        return self.args[0]


class RunFormatError(PolyIRError, ValueError):
    def __init__(self, path, line_no: int, reason: str):
        super().__init__(f"{path}, line {line_no}: {reason}")
        self.line_no = line_no


class MissingTitleError(PolyIRError, ValueError):
    def __init__(self, doc_id: str):
        super().__init__(f"document {doc_id!r} has no title")
        self.doc_id = doc_id

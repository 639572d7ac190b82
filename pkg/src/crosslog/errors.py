"""Exception types raised across the pipeline."""


class CrossLogError(Exception):
    """Base class for every error raised by this package."""


class EmptyLine(CrossLogError, ValueError):
    pass


class LengthMismatch(CrossLogError, ValueError):
    pass


class InvalidPattern(CrossLogError, ValueError):
    pass


class InvalidWindow(CrossLogError, ValueError):
    pass


class EmptyCorpus(CrossLogError, ValueError):
    pass


class DimMismatch(CrossLogError, ValueError):
    pass


class DuplicateWord(CrossLogError, ValueError):
    pass


class ParseError(CrossLogError, ValueError):
    pass


class ShapeMismatch(CrossLogError, ValueError):
    pass


class MissingTemplate(CrossLogError, KeyError):
    def __init__(self, template_id):
        super().__init__(template_id)
        self.template_id = template_id

    def __str__(self):
        return f"no embedding for template id {self.template_id}"


class EmptyBatch(CrossLogError, ValueError):
    pass


class MissingDomain(CrossLogError, ValueError):
    pass


class PoolTooSmall(CrossLogError, ValueError):
    pass


class InvalidRate(CrossLogError, ValueError):
    pass


class EmptyInput(CrossLogError, ValueError):
    pass


class ConfigInvalid(CrossLogError, ValueError):
    """Invalid or missing configuration; ``key`` holds the dotted key path."""

    def __init__(self, key, reason="missing or invalid"):
        super().__init__(f"{key}: {reason}")
        self.key = key


class MissingInput(CrossLogError, FileNotFoundError):
    def __init__(self, path):
        super().__init__(f"missing input file: {path}")
        self.path = path

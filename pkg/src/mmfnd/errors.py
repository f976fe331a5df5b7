"""Exception types raised across the kit."""


class MMFNDError(Exception):
    """Base class for every error raised by the kit."""


class ManifestError(MMFNDError):
    pass


class ImageDecodeError(MMFNDError):
    def __init__(self, message: str = "image decode failed", article_id: str | None = None):
        self.article_id = article_id
        if article_id is not None:
            message = f"{message} (article {article_id})"
        super().__init__(message)


class TranslationError(MMFNDError):
    def __init__(self, article_id: str, cause: Exception):
        self.article_id = article_id
        super().__init__(f"translation failed for article {article_id}: {cause}")


class EncoderError(MMFNDError):
    pass


class ShapeError(MMFNDError):
    pass


class NumericalError(MMFNDError):
    pass


class CheckpointError(MMFNDError):
    pass


class ConfigError(MMFNDError):
    pass

"""Exception hierarchy shared by every pfbench module."""


class PfError(Exception):
    """Base class. ``image_id`` is attached by the harness when a per-image step fails."""

    image_id = None

    def with_image(self, image_id):
        self.image_id = image_id
        self.args = (f"image_id={image_id}: {self.args[0] if self.args else ''}",)
        return self


class DataError(PfError, ValueError):
    """Invalid input data; the CLI maps this family to exit code 3."""


class MalformedFile(DataError):
    pass


class UnsupportedFormat(DataError):
    pass


class OutOfBounds(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class SingularCovariance(DataError):
    pass


class ImageSmallerThanWindow(DataError):
    pass


class ImageSmallerThanTile(DataError):
    pass


class GridMismatch(DataError):
    pass


class MissingTile(DataError):
    pass


class EmptyInput(DataError):
    pass


class DegenerateInput(DataError):
    pass


class MissingCell(DataError):
    pass


class TimestepOutOfRange(DataError):
    pass


class InvalidRange(DataError):
    pass


class MissingNoise(DataError):
    pass


class NonFiniteState(DataError):
    pass


class PredictorShapeViolation(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class NonPositiveTemperature(DataError):
    pass


class ScoreOutOfRange(DataError):
    pass


class NonFiniteTerm(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class ShapeViolation(DataError):
    """A restorer returned an image whose dimensions break the task's shape contract."""


class IoFailure(PfError, OSError):
    pass


class ExternalFailure(PfError, RuntimeError):
    """External restorer failed: nonzero exit, timeout or unparsable output. Exit code 4."""

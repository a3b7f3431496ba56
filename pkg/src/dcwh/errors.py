"""Exception hierarchy shared by every dcwh module.

Each class carries an ``exit_code`` so the command line front end can map
failures onto its documented status codes without a lookup table.
"""


class DCWHError(Exception):
    exit_code = 1
    code = "error"


class ConfigError(DCWHError, ValueError):
    """Invalid hyperparameter, shape spec or command line option."""

    exit_code = 2
    code = "config"


class DataError(DCWHError, ValueError):
    """Input data violates a structural requirement."""

    exit_code = 3
    code = "data"


class FormatError(DataError):
    """A binary file has the wrong magic number or version."""

    code = "format"


class TruncatedFileError(FormatError):
    code = "truncated"


class LabelRangeError(DataError):
    """A label id (or multi-hot row) is outside the declared class range."""

    code = "label_range"


class CenterUpdateError(DataError):
    """A class has no samples, so its center is undefined."""

    code = "empty_class"

    def __init__(self, class_id, message=None):
        self.class_id = int(class_id)
        super().__init__(message or f"class {self.class_id} has no samples")


class DimensionError(DataError):
    code = "dimension"


class DuplicateIdError(DataError):
    code = "duplicate_id"

    def __init__(self, sample_id):
        self.sample_id = int(sample_id)
        super().__init__(f"duplicate id {self.sample_id}")


class TrainingError(DCWHError, ArithmeticError):
    """Non-finite values appeared during optimization."""

    exit_code = 4
    code = "numerical"

"""Exception taxonomy shared by all driftlab modules."""


class DriftLabError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(DriftLabError):
    """Operands have incompatible shapes."""


class NumericError(DriftLabError):
    """A numeric-domain violation (non-finite input, divergence)."""


class EncodingError(DriftLabError):
    """A token id falls outside the relevant vocabulary."""


class ConfigError(DriftLabError):
    """Invalid configuration value or corpus specification."""


class UsageError(DriftLabError):
    """An operation was called in a way its contract forbids."""


class MissingArtifactError(DriftLabError):
    """A required checkpoint or corpus file is absent.

    Carries the subcommand that produces the missing artifact so the CLI
    can print an actionable message.
    """

    def __init__(self, path, produced_by):
        super().__init__(f"missing artifact {path}; run `driftlab {produced_by}` first")
        self.path = path
        self.produced_by = produced_by

"""Exception types shared across the package."""


class TanksWorldError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(TanksWorldError):
    """Invalid configuration value, file, or flag."""


class ArenaOvercrowdedError(TanksWorldError):
    """Entity placement failed after the rejection-sampling attempt budget."""


class IncompleteActionMapError(TanksWorldError):
    """An alive controlled tank was stepped without an action."""


class EpisodeFinishedError(TanksWorldError):
    """step() called on an environment whose episode already ended."""


class DeadObserverError(TanksWorldError):
    """Visibility or observation requested for a dead tank."""


class NoDemonstrationsError(TanksWorldError):
    """Clone fitting was given an empty demonstration set."""


class TrajectoryError(TanksWorldError):
    """Base class for trajectory file problems."""


class UnsupportedVersionError(TrajectoryError):
    """Trajectory file magic or version not recognized."""


class CorruptTrajectoryError(TrajectoryError):
    """Trajectory file is structurally broken or fails its checksum."""


class ProtocolError(TanksWorldError):
    """Malformed or out-of-contract wire message."""

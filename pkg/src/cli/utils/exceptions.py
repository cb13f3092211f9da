"""
Custom Exceptions for the command line
"""


class CliError(Exception):
    """Base exception for CLI errors"""
    pass


class CommandError(CliError):
    """Bad command arguments"""
    pass


class StorageError(CliError):
    """Storage related errors"""
    pass

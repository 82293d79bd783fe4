# Copyright (c) 2024. All rights reserved.
"""Exception types raised by the synchronization-rate library."""


class SyncRateError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(SyncRateError, ValueError):
    """An argument violates an operation's precondition."""


class InstanceTooLargeError(SyncRateError):
    """An exhaustive search would exceed its configured enumeration cap."""


class NotEncodableError(SyncRateError, ValueError):
    """A knapsack item value cannot be expressed as a consistency gain."""


class BudgetExhaustsRatesError(SyncRateError):
    """The budget asks for more increments than the rate caps allow."""


class ContractViolationError(SyncRateError):
    """An oracle was driven outside its calling contract."""


class UndefinedMuError(SyncRateError):
    """No try-out had a positive true marginal gain."""


class PresetNotFoundError(SyncRateError, FileNotFoundError):
    """A named preset or experiment document could not be resolved."""

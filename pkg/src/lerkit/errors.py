"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class LerError(Exception):
    """Base error for all toolkit failures."""


# --- identity ---------------------------------------------------------------

class InvalidKey(LerError):
    pass


class NotFound(LerError):
    pass


class SigningError(LerError):
    pass


# --- credential -------------------------------------------------------------

class MissingProvenance(LerError):
    pass


class EmptyClaims(LerError):
    pass


class Expired(LerError):
    pass


class EmptyDisclosure(LerError):
    pass


class BadListSig(LerError):
    pass


class Unauthorized(LerError):
    pass


class NotDerivative(LerError):
    pass


# --- enclave ----------------------------------------------------------------

class BadSalt(LerError):
    pass


class SessionNotReady(LerError):
    pass


class SealError(LerError):
    pass


# --- skills -----------------------------------------------------------------

class EmptyTaxonomy(LerError):
    pass


class NoEvidence(LerError):
    pass


class UnknownWeightKey(LerError):
    pass


class BadK(LerError):
    pass


class ProviderUnavailable(LerError):
    pass


# --- matching ---------------------------------------------------------------

class EmptyRequirement(LerError):
    pass


class NoCandidateSkills(LerError):
    pass


class UnverifiedInput(LerError):
    pass


# --- gateway ----------------------------------------------------------------

class ConfigError(LerError):
    pass

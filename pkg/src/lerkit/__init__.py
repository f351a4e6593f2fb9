"""Decentralized learning-and-employment-record toolkit.

Institutional credential issuance, enclave-attested derivation of skill
credentials from transcripts and syllabi, holder-controlled selective
disclosure, and verifier-side skills-only matching.
"""

__version__ = "0.1.0"

"""Deployable surface: issuer/verifier/holder services, wallet CLI, persistence."""

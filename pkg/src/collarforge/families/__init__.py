"""Builtin manifold families. Every FamilyBase subclass here is registered."""

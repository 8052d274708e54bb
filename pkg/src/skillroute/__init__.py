"""Skill-profile based, budget-constrained LLM model selection."""

__version__ = "0.1.0"

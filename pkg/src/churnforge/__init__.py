"""Churn prediction from call detail records with social-network features."""

__version__ = "0.1.0"

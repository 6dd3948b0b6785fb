"""Capsule-augmented neural text classifiers, trained from scratch on CPU."""

__version__ = "0.1.0"

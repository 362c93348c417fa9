"""Dynamic-circuit GHZ state preparation with majority-vote fusion."""

__version__ = "0.1.0"

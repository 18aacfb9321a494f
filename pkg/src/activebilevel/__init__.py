"""Learning active constraint sets to solve linear bilevel bidding problems."""

__version__ = "0.1.0"

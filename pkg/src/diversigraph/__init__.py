"""Incoming and outgoing news-slant analytics on follower networks."""

__version__ = "0.1.0"

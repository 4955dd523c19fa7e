"""HoRA: hypernetwork-shared low-rank adaptation."""
__version__ = "0.1.0"

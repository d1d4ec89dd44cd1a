"""OTFS dual-functional radar-communication waveform design toolkit."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("otfs-dfrc")
except PackageNotFoundError:
    __version__ = "0.0.0+local"

"""Design and simulation tools for a birefringently phasematched four-wave-mixing pair source."""

__version__ = "0.1.0"

"""symocp - symmetry-reduced moment relaxations for polynomial optimal control."""

__version__ = "0.1.0"
__description__ = "Moment-SOS relaxations of sign-symmetric polynomial optimal control problems with trajectory recovery"

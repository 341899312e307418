"""ionstrobe — trapped-ion spin-motion simulator and stroboscopic encode/decode toolkit."""

__version__ = "0.1.0"

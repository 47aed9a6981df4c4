"""Layer-differentiated ULMFiT-style text classification toolkit."""

__version__ = "0.1.0"

"""vnfscale: graph-attention scaling policies for service function chains."""

__version__ = "0.1.0"

"""Cluster-policy engine: annotated SQL views compile to finite-domain
optimization models; solutions come back as table deltas."""

__version__ = "0.1.0"

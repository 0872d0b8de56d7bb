"""Targeted fused ridge estimation of multiple precision matrices."""

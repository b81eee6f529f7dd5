"""Bundled scenario configs, one per system from the studied families."""

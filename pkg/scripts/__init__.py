"""Scripts package for utility and management scripts."""

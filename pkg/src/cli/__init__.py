"""Command-line surface and run configuration."""

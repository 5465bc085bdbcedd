"""Manifest files: grammar, parsing, models and the subcommand runner."""

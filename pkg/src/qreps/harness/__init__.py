"""Command line, configuration, studies and output writers."""

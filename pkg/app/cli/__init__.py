"""Command-line front end and evaluation harness."""

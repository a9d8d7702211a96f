"""Command-line front-end: one function per verb, wired up in app.py."""

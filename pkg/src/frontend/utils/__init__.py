"""
Output helpers for the command line.
"""

from .formatting import format_counts, format_event, parse_tags

"""
deal - departure detection from ambient light sensor readings.
Main package containing all application modules.
"""

__version__ = "1.0.0"

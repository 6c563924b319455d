"""
Frontend package.
Contains the command line interface and its output helpers.
"""

"""
Configuration package.
constants.py holds detector defaults and grids; settings.py holds paths,
the config file loader and logging setup.
"""

"""
Configuration package for the FDX testing toolkit
"""
from .settings import *
from .presets import *

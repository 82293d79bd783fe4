# Copyright (c) 2024. All rights reserved.
"""Synchronization-rate policies for distributed SDN control planes."""

__version__ = "0.1.0"

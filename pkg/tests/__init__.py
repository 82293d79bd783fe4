# Copyright (c) 2024. All rights reserved.
"""Tests package for syncrate."""

"""Shared pytest path setup; statistical helpers live in stat_helpers.py."""

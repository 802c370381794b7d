"""Factored delta-GLMB multitarget tracking with merge/split hypothesis management."""

"""Semiclassical jump-process generators and Agmon-type decay checks."""

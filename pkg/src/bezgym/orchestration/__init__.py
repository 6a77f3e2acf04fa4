"""Curriculum staging, domain randomization and checkpointing (see the submodules)."""
